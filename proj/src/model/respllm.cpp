#include "respllm/model/respllm.hpp"

#include "respllm/core/ops.hpp"
#include "respllm/text/vocabulary.hpp"

#include <array>
#include <cmath>

namespace respllm {

void RespLLMConfig::validate() const {
  if (width <= 0 || heads <= 0 || width % heads != 0)
    throw ConfigError("respllm: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (layers < 1) throw ConfigError("respllm: layers must be >= 1");
  if (lora_rank < 1 || lora_rank > width)
    throw ConfigError("respllm: lora_rank " + std::to_string(lora_rank) +
                      " must lie in [1, min(din, dout) = " + std::to_string(width) + "]");
  if (n_classes != 2) throw ConfigError("respllm: n_classes must be 2");
  if (max_len < audio::AudioEncoder::kTokens)
    throw ConfigError("respllm: max_len must hold at least the 64 audio tokens");
  if (vocab_size < 2) throw ConfigError("respllm: vocab_size must cover [PAD] and [UNK]");
  if (ffn_mult < 1) throw ConfigError("respllm: ffn_mult must be >= 1");
  if (lora_init_std < 0.0) throw ConfigError("respllm: lora_init_std must be >= 0");
  encoder.validate();
}

nlohmann::json RespLLMConfig::to_json() const {
  return {{"width", width},
          {"layers", layers},
          {"heads", heads},
          {"ffn_mult", ffn_mult},
          {"lora_rank", lora_rank},
          {"lora_alpha", lora_alpha},
          {"lora_init_std", lora_init_std},
          {"n_classes", n_classes},
          {"max_len", max_len},
          {"vocab_size", vocab_size},
          {"encoder", encoder.to_json()}};
}

RespLLMConfig RespLLMConfig::from_json(const nlohmann::json& j) {
  RespLLMConfig c;
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.lora_init_std = j.value("lora_init_std", c.lora_init_std);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  if (j.contains("encoder")) c.encoder = audio::AudioEncoderConfig::from_json(j.at("encoder"));
  return c;
}

AssembledSequence assemble(const Matrix& zp, const Matrix& zd, const Matrix& za,
                           const Matrix& positions, Eigen::Index pad_to,
                           const RowVector* pad_row) {
  const Eigen::Index s = za.cols();
  if (zp.cols() != s || zd.cols() != s || positions.cols() != s)
    throw DimensionError("assemble: widths differ: prompt" + shape_str(zp) + " dms" +
                         shape_str(zd) + " audio" + shape_str(za) + " positions" +
                         shape_str(positions));
  AssembledSequence seq;
  seq.lp = zp.rows();
  seq.ld = zd.rows();
  seq.la = za.rows();
  const Eigen::Index len = seq.length();
  const Eigen::Index total = std::max(len, pad_to);
  if (positions.rows() < total)
    throw InputError("assemble: sequence length " + std::to_string(total) + " exceeds max_len " +
                     std::to_string(positions.rows()));
  seq.z = Matrix::Zero(total, s);
  seq.z.topRows(seq.lp) = zp;
  seq.z.middleRows(seq.lp, seq.ld) = zd;
  seq.z.middleRows(seq.lp + seq.ld, seq.la) = za;
  if (pad_row != nullptr)
    for (Eigen::Index i = len; i < total; ++i) seq.z.row(i) = *pad_row;
  seq.z += positions.topRows(total);
  seq.pad_mask.assign(static_cast<std::size_t>(total), 0);
  std::fill(seq.pad_mask.begin(), seq.pad_mask.begin() + len, 1);
  return seq;
}

Matrix make_word_embedding(int vocab_size, int width, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "word_embedding"));
  return normal_matrix(vocab_size, width, 1.0, rng);
}

RespLLM::RespLLM(const RespLLMConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng enc_rng(derive_seed(seed, "encoder"));
  encoder_ = audio::AudioEncoder(params_, cfg_.encoder, enc_rng, false);

  const int s = cfg_.width;
  embedding_ = &params_.add("llm.embedding", make_word_embedding(cfg_.vocab_size, s, seed), false);
  Rng rng(derive_seed(seed, "llm"));
  positions_ = &params_.add("llm.positions", normal_matrix(cfg_.max_len, s, 0.1, rng), false);

  const double ps = 1.0 / std::sqrt(static_cast<double>(cfg_.encoder.width));
  proj_w_ = &params_.add("projector.w", normal_matrix(cfg_.encoder.width, s, ps, rng), true);
  proj_b_ = &params_.add("projector.b", Matrix::Zero(1, s), true);

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string prefix = "llm.block" + std::to_string(l);
    TransformerBlock b =
        make_transformer_block(params_, prefix, s, cfg_.heads, cfg_.ffn_mult, rng, false);
    b.q_lora = make_lora(params_, prefix + ".attn.wq", s, s, cfg_.lora_rank, cfg_.lora_alpha, rng,
                         cfg_.lora_init_std);
    b.k_lora = make_lora(params_, prefix + ".attn.wk", s, s, cfg_.lora_rank, cfg_.lora_alpha, rng,
                         cfg_.lora_init_std);
    blocks_.push_back(std::move(b));
  }
  std::tie(final_gamma_, final_beta_) = make_layer_norm(params_, "llm.final_norm", s, false);
  head_w_ = &params_.add("head.w", normal_matrix(s, cfg_.n_classes, 0.02, rng), true);
  head_b_ = &params_.add("head.b", Matrix::Zero(1, cfg_.n_classes), true);
}

Var RespLLM::project_audio(Tape& tape, Var z_a) const {
  return audio::project(tape, z_a, *proj_w_, *proj_b_);
}

RespLLM::Trace RespLLM::forward(Tape& tape, std::span<const int> prompt_ids,
                                std::span<const int> dms_ids, Var za, bool use_adapters,
                                Eigen::Index pad_to) const {
  if (za.cols() != cfg_.width)
    throw DimensionError("respllm: audio tokens " + shape_str(za.value()) + " vs width " +
                         std::to_string(cfg_.width));
  Trace tr;
  tr.lp = static_cast<Eigen::Index>(prompt_ids.size());
  tr.ld = static_cast<Eigen::Index>(dms_ids.size());
  tr.la = za.rows();
  const Eigen::Index len = tr.lp + tr.ld + tr.la;
  tr.padded = std::max(len, pad_to);
  if (tr.padded > cfg_.max_len)
    throw InputError("respllm: sequence length L=" + std::to_string(tr.padded) +
                     " exceeds max_len=" + std::to_string(cfg_.max_len));

  Var table = tape.param(*embedding_);
  std::vector<int> pad_ids(static_cast<std::size_t>(tr.padded - len), text::Vocabulary::kPad);
  const std::array<Var, 4> parts{ops::gather_rows(table, prompt_ids),
                                 ops::gather_rows(table, dms_ids), za,
                                 ops::gather_rows(table, pad_ids)};
  Var z = ops::concat_rows(parts);
  z = ops::add(z, ops::slice_rows(tape.param(*positions_), 0, tr.padded));
  tr.assembled = z;

  AttentionMask mask;
  mask.causal = true;
  std::vector<char> valid(static_cast<std::size_t>(tr.padded), 0);
  std::fill(valid.begin(), valid.begin() + len, 1);
  if (tr.padded > len) mask.key_valid = valid;

  Var x = z;
  for (const TransformerBlock& b : blocks_) x = b.forward(tape, x, mask, use_adapters);
  tr.hidden = x;
  Var normed = ops::layer_norm(x, tape.param(*final_gamma_), tape.param(*final_beta_));
  Var pooled = ops::masked_mean_rows(normed, valid);
  tr.logits = ops::linear(pooled, tape.param(*head_w_), tape.param(*head_b_));
  return tr;
}

RespLLM::Trace RespLLM::forward(Tape& tape, const Example& ex, bool use_adapters,
                                Eigen::Index pad_to) const {
  Var za = project_audio(tape, audio_embedding(tape, *this, ex));
  return forward(tape, ex.prompt_ids, ex.dms_ids, za, use_adapters, pad_to);
}

Var RespLLM::logits(Tape& tape, const Example& ex) const { return forward(tape, ex).logits; }

std::vector<Parameter*> RespLLM::trainable_parameters() {
  std::vector<Parameter*> out{proj_w_, proj_b_};
  for (TransformerBlock& b : blocks_) {
    out.push_back(b.q_lora->a);
    out.push_back(b.q_lora->b);
    out.push_back(b.k_lora->a);
    out.push_back(b.k_lora->b);
  }
  out.push_back(head_w_);
  out.push_back(head_b_);
  return out;
}

std::size_t RespLLM::expected_trainable_count() const {
  const auto a = static_cast<std::size_t>(cfg_.encoder.width);
  const auto s = static_cast<std::size_t>(cfg_.width);
  const auto r = static_cast<std::size_t>(cfg_.lora_rank);
  const auto layers = static_cast<std::size_t>(cfg_.layers);
  return (a * s + s) + layers * 2 * (2 * r * s) + (2 * s + 2);
}

}  // namespace respllm
