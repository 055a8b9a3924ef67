#pragma once

#include "respllm/audio/encoder.hpp"
#include "respllm/model/classifier.hpp"
#include "respllm/model/transformer.hpp"

#include <span>

namespace respllm {

struct RespLLMConfig {
  int width = 64;  // S
  int layers = 2;
  int heads = 2;
  int ffn_mult = 4;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  double lora_init_std = 0.0;  // std of A at init; 0 selects 1 / sqrt(S)
  int n_classes = 2;
  int max_len = 256;
  int vocab_size = 0;
  audio::AudioEncoderConfig encoder;

  double lora_scale() const { return lora_alpha / static_cast<double>(lora_rank); }
  void validate() const;
  nlohmann::json to_json() const;
  static RespLLMConfig from_json(const nlohmann::json& j);
};

// Prompt, DMS and audio rows concatenated in that order, positions added.
// Rows at index >= length() are padding ([PAD] embedding + position).
struct AssembledSequence {
  Matrix z;
  Eigen::Index lp = 0;
  Eigen::Index ld = 0;
  Eigen::Index la = 0;
  std::vector<char> pad_mask;  // 1 for real tokens, 0 for padding

  Eigen::Index length() const { return lp + ld + la; }
  Eigen::Index padded_length() const { return z.rows(); }
};

// Value-level assembly. `positions` must have at least pad_to (or L) rows;
// `pad_row` fills padded positions before positions are added.
AssembledSequence assemble(const Matrix& zp, const Matrix& zd, const Matrix& za,
                           const Matrix& positions, Eigen::Index pad_to = 0,
                           const RowVector* pad_row = nullptr);

// Frozen decoder transformer over [prompt | DMS | audio] with LoRA on W_q and
// W_k, masked mean pooling and a two-way head. Only the projector, the LoRA
// pairs and the head are trainable.
class RespLLM : public Classifier {
 public:
  RespLLM(const RespLLMConfig& cfg, std::uint64_t seed);

  std::string kind() const override { return "respllm"; }
  nlohmann::json config() const override { return cfg_.to_json(); }
  Var logits(Tape& tape, const Example& ex) const override;
  const audio::AudioEncoder* encoder() const override { return &encoder_; }
  bool encoder_frozen() const override { return true; }

  struct Trace {
    Var assembled;  // [L' x S] after positions
    Var hidden;     // final hidden states [L' x S] before the final norm
    Var logits;     // [1 x 2]
    Eigen::Index lp = 0, ld = 0, la = 0, padded = 0;
  };

  // za: projected audio tokens Z_a [64 x S]. pad_to > L appends padding.
  Trace forward(Tape& tape, std::span<const int> prompt_ids, std::span<const int> dms_ids,
                Var za, bool use_adapters = true, Eigen::Index pad_to = 0) const;
  Trace forward(Tape& tape, const Example& ex, bool use_adapters = true,
                Eigen::Index pad_to = 0) const;

  // Z_a = P(z_a).
  Var project_audio(Tape& tape, Var z_a) const;

  std::vector<Parameter*> trainable_parameters();
  // Closed-form size of trainable_parameters().
  std::size_t expected_trainable_count() const;

  const RespLLMConfig& cfg() const { return cfg_; }
  const Parameter& word_embedding() const { return *embedding_; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }

 private:
  RespLLMConfig cfg_;
  audio::AudioEncoder encoder_;
  Parameter* embedding_ = nullptr;
  Parameter* positions_ = nullptr;
  Parameter* proj_w_ = nullptr;
  Parameter* proj_b_ = nullptr;
  std::vector<TransformerBlock> blocks_;
  Parameter* final_gamma_ = nullptr;
  Parameter* final_beta_ = nullptr;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

// Frozen [V x S] word-embedding table shared by the fused model and the
// soft-DMS baselines; identical for identical (vocab_size, width, seed).
Matrix make_word_embedding(int vocab_size, int width, std::uint64_t seed);

}  // namespace respllm
