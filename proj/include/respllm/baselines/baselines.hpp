#pragma once

#include "respllm/audio/encoder.hpp"
#include "respllm/baselines/dms_encoding.hpp"
#include "respllm/model/classifier.hpp"

#include <memory>

namespace respllm::baselines {

// Audio encoder + mean pooling + linear head. The encoder is fine-tuned by default.
class AudioOnlyClassifier : public Classifier {
 public:
  AudioOnlyClassifier(const audio::AudioEncoderConfig& cfg, std::uint64_t seed,
                      bool finetune_encoder = true);

  std::string kind() const override { return "audio"; }
  nlohmann::json config() const override;
  Var logits(Tape& tape, const Example& ex) const override;
  const audio::AudioEncoder* encoder() const override { return &encoder_; }
  bool encoder_frozen() const override { return !finetune_; }

 private:
  audio::AudioEncoder encoder_;
  bool finetune_;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

enum class DmsMode { Hard, Soft };
std::string to_string(DmsMode m);
DmsMode parse_dms_mode(const std::string& s);

// Linear model on the hard or soft DMS vector.
class DmsOnlyClassifier : public Classifier {
 public:
  // Hard: schema defines the input; Soft: a frozen [V x S] embedding table.
  DmsOnlyClassifier(DmsMode mode, const DmsSchema& schema, int vocab_size, int text_width,
                    std::uint64_t seed);

  std::string kind() const override { return mode_ == DmsMode::Hard ? "dms-hard" : "dms-soft"; }
  nlohmann::json config() const override;
  Var logits(Tape& tape, const Example& ex) const override;

  Matrix dms_vector(const Example& ex) const;

 private:
  DmsMode mode_;
  DmsSchema schema_;
  int vocab_size_;
  int text_width_;
  Parameter* table_ = nullptr;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

enum class FusionKind { Concat, Add, CrossAttention };
std::string to_string(FusionKind k);

// Non-LLM fusion of the mean-pooled audio embedding with a DMS vector.
//   concat: head([audio | dms])
//   add:    head(P_a audio + P_d dms)
//   xattn:  the DMS vector, projected to width A, is a single query attending
//           over the 64 audio tokens; head([attended | dms])
class FusionClassifier : public Classifier {
 public:
  FusionClassifier(FusionKind fusion, DmsMode mode, const audio::AudioEncoderConfig& enc,
                   const DmsSchema& schema, int vocab_size, int text_width, std::uint64_t seed,
                   bool finetune_encoder = false, int xattn_heads = 4);

  std::string kind() const override;
  nlohmann::json config() const override;
  Var logits(Tape& tape, const Example& ex) const override;
  const audio::AudioEncoder* encoder() const override { return &encoder_; }
  bool encoder_frozen() const override { return !finetune_; }

  // Cross-attention output [1 x A] for given audio tokens and DMS vector (xattn only).
  Var cross_attend(Tape& tape, Var audio_tokens, Var dms_vec) const;
  std::size_t dms_width() const;

 private:
  Matrix dms_vector(const Example& ex) const;

  FusionKind fusion_;
  DmsMode mode_;
  DmsSchema schema_;
  int vocab_size_;
  int text_width_;
  bool finetune_;
  int xattn_heads_;
  audio::AudioEncoder encoder_;
  Parameter* table_ = nullptr;
  Parameter* pa_w_ = nullptr;
  Parameter* pa_b_ = nullptr;
  Parameter* pd_w_ = nullptr;
  Parameter* pd_b_ = nullptr;
  Parameter* xq_ = nullptr;
  Parameter* xk_ = nullptr;
  Parameter* xv_ = nullptr;
  Parameter* xo_ = nullptr;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

}  // namespace respllm::baselines
