#pragma once

#include "respllm/core/random.hpp"
#include "respllm/model/transformer.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace respllm::audio {

struct AudioEncoderConfig {
  int patch_dim = 256;
  int width = 128;  // A
  int layers = 1;
  int heads = 4;
  int ffn_mult = 4;
  // Fixed affine normalization of log-mel inputs before the patch embedding.
  double input_mean = -1.0;
  double input_scale = 4.35;

  void validate() const;
  nlohmann::json to_json() const;
  static AudioEncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const AudioEncoderConfig&) const = default;
};

// Patch embedding + learned per-patch positions + bidirectional pre-norm
// transformer blocks. Output: one row per patch (z_a, [64 x A]).
class AudioEncoder {
 public:
  static constexpr int kTokens = 64;

  AudioEncoder() = default;
  AudioEncoder(ParameterSet& params, const AudioEncoderConfig& cfg, Rng& rng, bool trainable);

  Var encode(Tape& tape, const Matrix& patches) const;
  Matrix encode(const Matrix& patches) const;

  const AudioEncoderConfig& config() const { return cfg_; }
  static bool owns(const std::string& param_name) { return param_name.rfind("encoder.", 0) == 0; }

 private:
  Matrix normalize(const Matrix& patches) const;

  AudioEncoderConfig cfg_;
  Parameter* patch_w_ = nullptr;
  Parameter* patch_b_ = nullptr;
  Parameter* pos_ = nullptr;
  std::vector<TransformerBlock> blocks_;
};

// Z_a = z_a W + b, the linear projector into the language model width.
Var project(Tape& tape, Var z_a, const Parameter& weight, const Parameter& bias);

// Copies every "encoder.*" parameter value from one set into another (shapes must match).
void copy_encoder_weights(const ParameterSet& from, ParameterSet& to);

}  // namespace respllm::audio
