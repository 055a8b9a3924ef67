#include "respllm/audio/encoder.hpp"

#include "respllm/audio/frontend.hpp"

#include <cmath>

namespace respllm::audio {

void AudioEncoderConfig::validate() const {
  if (patch_dim <= 0) throw ConfigError("audio encoder: patch_dim must be positive");
  if (width <= 0 || heads <= 0 || width % heads != 0)
    throw ConfigError("audio encoder: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (layers < 1) throw ConfigError("audio encoder: layers must be >= 1");
  if (ffn_mult < 1) throw ConfigError("audio encoder: ffn_mult must be >= 1");
  if (!(input_scale > 0.0)) throw ConfigError("audio encoder: input_scale must be positive");
}

nlohmann::json AudioEncoderConfig::to_json() const {
  return {{"patch_dim", patch_dim}, {"width", width},           {"layers", layers},
          {"heads", heads},         {"ffn_mult", ffn_mult},     {"input_mean", input_mean},
          {"input_scale", input_scale}};
}

AudioEncoderConfig AudioEncoderConfig::from_json(const nlohmann::json& j) {
  AudioEncoderConfig c;
  c.patch_dim = j.value("patch_dim", c.patch_dim);
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.input_mean = j.value("input_mean", c.input_mean);
  c.input_scale = j.value("input_scale", c.input_scale);
  return c;
}

AudioEncoder::AudioEncoder(ParameterSet& params, const AudioEncoderConfig& cfg, Rng& rng,
                           bool trainable)
    : cfg_(cfg) {
  cfg_.validate();
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim));
  patch_w_ = &params.add("encoder.patch.w", normal_matrix(cfg_.patch_dim, cfg_.width, s, rng),
                         trainable);
  patch_b_ = &params.add("encoder.patch.b", Matrix::Zero(1, cfg_.width), trainable);
  pos_ = &params.add("encoder.pos", normal_matrix(kTokens, cfg_.width, 0.1, rng), trainable);
  for (int l = 0; l < cfg_.layers; ++l)
    blocks_.push_back(make_transformer_block(params, "encoder.block" + std::to_string(l),
                                             cfg_.width, cfg_.heads, cfg_.ffn_mult, rng,
                                             trainable));
}

Matrix AudioEncoder::normalize(const Matrix& patches) const {
  if (patches.rows() != kTokens || patches.cols() != cfg_.patch_dim)
    throw DimensionError("encode_audio: expected patches [64x" + std::to_string(cfg_.patch_dim) +
                         "], got " + shape_str(patches));
  return (patches.array() - cfg_.input_mean) / cfg_.input_scale;
}

Var AudioEncoder::encode(Tape& tape, const Matrix& patches) const {
  if (patch_w_ == nullptr) throw ConfigError("encode_audio: encoder not initialized");
  Var x = tape.constant(normalize(patches));
  x = ops::linear(x, tape.param(*patch_w_), tape.param(*patch_b_));
  x = ops::add(x, tape.param(*pos_));
  const AttentionMask bidirectional;
  for (const TransformerBlock& b : blocks_) x = b.forward(tape, x, bidirectional);
  return x;
}

Matrix AudioEncoder::encode(const Matrix& patches) const {
  Tape tape;
  return encode(tape, patches).value();
}

Var project(Tape& tape, Var z_a, const Parameter& weight, const Parameter& bias) {
  const Matrix& w = weight.value;
  if (z_a.cols() != w.rows())
    throw DimensionError("project: z_a" + shape_str(z_a.value()) + " vs projector" +
                         shape_str(w));
  return ops::linear(z_a, tape.param(weight), tape.param(bias));
}

void copy_encoder_weights(const ParameterSet& from, ParameterSet& to) {
  std::size_t copied = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Parameter& src = from[i];
    if (!AudioEncoder::owns(src.name)) continue;
    Parameter* dst = to.find(src.name);
    if (dst == nullptr) throw ConfigError("copy_encoder_weights: target lacks " + src.name);
    if (dst->value.rows() != src.value.rows() || dst->value.cols() != src.value.cols())
      throw DimensionError("copy_encoder_weights: " + src.name + " " + shape_str(src.value) +
                           " vs " + shape_str(dst->value));
    dst->value = src.value;
    ++copied;
  }
  if (copied == 0) throw ConfigError("copy_encoder_weights: source has no encoder parameters");
}

}  // namespace respllm::audio
