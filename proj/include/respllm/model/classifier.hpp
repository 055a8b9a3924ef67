#pragma once

#include "respllm/core/tape.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace respllm {

namespace audio {
class AudioEncoder;
}

// Model-ready view of one instruction record.
struct Example {
  std::string task_id;
  std::vector<int> prompt_ids;
  std::vector<int> dms_ids;
  std::shared_ptr<const Matrix> patches;  // [64 x 256]
  std::shared_ptr<const Matrix> encoded;  // cached frozen-encoder output [64 x A]
  RowVector hard_dms;
  int label = 0;
};

// Binary classifier over Examples; label 1 is the prompt's positive answer.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json config() const = 0;
  // [1 x 2] logits.
  virtual Var logits(Tape& tape, const Example& ex) const = 0;
  // The audio encoder if the model has one.
  virtual const audio::AudioEncoder* encoder() const { return nullptr; }
  // Frozen encoder: Example::encoded may be precomputed once and reused.
  virtual bool encoder_frozen() const { return true; }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  RowVector probabilities(const Example& ex) const;
  // Probability of the positive class.
  double predict_proba(const Example& ex) const { return probabilities(ex)(1); }

 protected:
  ParameterSet params_;
};

// z_a for an example: the cached encoding when present and the encoder is
// frozen, otherwise the encoder run on the example's patches.
Var audio_embedding(Tape& tape, const Classifier& model, const Example& ex);

}  // namespace respllm
