#include "respllm/baselines/baselines.hpp"

#include "respllm/core/ops.hpp"
#include "respllm/model/respllm.hpp"

#include <cmath>

namespace respllm::baselines {
namespace {

Parameter* add_head(ParameterSet& params, const std::string& name, Eigen::Index din, Rng& rng) {
  return &params.add(name + ".w", normal_matrix(din, 2, 0.02, rng), true);
}

double fan_in(Eigen::Index din) { return 1.0 / std::sqrt(static_cast<double>(din)); }

Matrix dms_input(DmsMode mode, const Example& ex, const DmsSchema& schema, const Parameter* table) {
  if (mode == DmsMode::Hard) {
    if (ex.hard_dms.size() != static_cast<Eigen::Index>(schema.dimension()))
      throw DimensionError("hard DMS vector of width " + std::to_string(ex.hard_dms.size()) +
                           " does not match schema width " + std::to_string(schema.dimension()));
    return ex.hard_dms;
  }
  return dms_soft_encode(ex.dms_ids, table->value);
}

}  // namespace

std::string to_string(DmsMode m) { return m == DmsMode::Hard ? "hard" : "soft"; }

DmsMode parse_dms_mode(const std::string& s) {
  if (s == "hard") return DmsMode::Hard;
  if (s == "soft") return DmsMode::Soft;
  throw ConfigError("unknown DMS mode '" + s + "' (expected hard|soft)");
}

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::Concat: return "concat";
    case FusionKind::Add: return "add";
    case FusionKind::CrossAttention: return "xattn";
  }
  return "?";
}

// ---- audio only -------------------------------------------------------------

AudioOnlyClassifier::AudioOnlyClassifier(const audio::AudioEncoderConfig& cfg, std::uint64_t seed,
                                         bool finetune_encoder)
    : finetune_(finetune_encoder) {
  Rng enc_rng(derive_seed(seed, "encoder"));
  encoder_ = audio::AudioEncoder(params_, cfg, enc_rng, finetune_encoder);
  Rng rng(derive_seed(seed, "audio_head"));
  head_w_ = add_head(params_, "head", cfg.width, rng);
  head_b_ = &params_.add("head.b", Matrix::Zero(1, 2), true);
}

nlohmann::json AudioOnlyClassifier::config() const {
  return {{"encoder", encoder_.config().to_json()}, {"finetune_encoder", finetune_}};
}

Var AudioOnlyClassifier::logits(Tape& tape, const Example& ex) const {
  Var pooled = ops::masked_mean_rows(audio_embedding(tape, *this, ex));
  return ops::linear(pooled, tape.param(*head_w_), tape.param(*head_b_));
}

// ---- DMS only ---------------------------------------------------------------

DmsOnlyClassifier::DmsOnlyClassifier(DmsMode mode, const DmsSchema& schema, int vocab_size,
                                     int text_width, std::uint64_t seed)
    : mode_(mode), schema_(schema), vocab_size_(vocab_size), text_width_(text_width) {
  Rng rng(derive_seed(seed, "dms_head"));
  Eigen::Index din = 0;
  if (mode == DmsMode::Hard) {
    din = static_cast<Eigen::Index>(schema.dimension());
  } else {
    if (vocab_size < 2 || text_width < 1)
      throw ConfigError("dms-soft: needs a vocabulary and a positive text width");
    table_ = &params_.add("text.embedding", make_word_embedding(vocab_size, text_width, seed),
                          false);
    din = text_width;
  }
  if (din == 0) throw ConfigError("dms baseline: DMS vector has zero width");
  head_w_ = add_head(params_, "head", din, rng);
  head_b_ = &params_.add("head.b", Matrix::Zero(1, 2), true);
}

nlohmann::json DmsOnlyClassifier::config() const {
  return {{"dms", to_string(mode_)},
          {"schema", schema_.to_json()},
          {"vocab_size", vocab_size_},
          {"text_width", text_width_}};
}

Matrix DmsOnlyClassifier::dms_vector(const Example& ex) const {
  return dms_input(mode_, ex, schema_, table_);
}

Var DmsOnlyClassifier::logits(Tape& tape, const Example& ex) const {
  Var x = tape.constant(dms_vector(ex));
  return ops::linear(x, tape.param(*head_w_), tape.param(*head_b_));
}

// ---- fusion -----------------------------------------------------------------

FusionClassifier::FusionClassifier(FusionKind fusion, DmsMode mode,
                                   const audio::AudioEncoderConfig& enc, const DmsSchema& schema,
                                   int vocab_size, int text_width, std::uint64_t seed,
                                   bool finetune_encoder, int xattn_heads)
    : fusion_(fusion),
      mode_(mode),
      schema_(schema),
      vocab_size_(vocab_size),
      text_width_(text_width),
      finetune_(finetune_encoder),
      xattn_heads_(xattn_heads) {
  Rng enc_rng(derive_seed(seed, "encoder"));
  encoder_ = audio::AudioEncoder(params_, enc, enc_rng, finetune_encoder);
  if (mode == DmsMode::Soft) {
    if (vocab_size < 2 || text_width < 1)
      throw ConfigError("fusion-soft: needs a vocabulary and a positive text width");
    table_ = &params_.add("text.embedding", make_word_embedding(vocab_size, text_width, seed),
                          false);
  }
  const auto a = static_cast<Eigen::Index>(enc.width);
  const auto d = static_cast<Eigen::Index>(dms_width());
  if (d == 0) throw ConfigError("fusion: DMS vector has zero width");
  Rng rng(derive_seed(seed, "fusion"));
  Eigen::Index head_in = 0;
  switch (fusion) {
    case FusionKind::Concat:
      head_in = a + d;
      break;
    case FusionKind::Add:
      pa_w_ = &params_.add("fusion.audio_proj.w", normal_matrix(a, a, fan_in(a), rng), true);
      pa_b_ = &params_.add("fusion.audio_proj.b", Matrix::Zero(1, a), true);
      pd_w_ = &params_.add("fusion.dms_proj.w", normal_matrix(d, a, fan_in(d), rng), true);
      pd_b_ = &params_.add("fusion.dms_proj.b", Matrix::Zero(1, a), true);
      head_in = a;
      break;
    case FusionKind::CrossAttention:
      if (xattn_heads <= 0 || a % xattn_heads != 0)
        throw ConfigError("fusion-xattn: width " + std::to_string(a) + " not divisible by " +
                          std::to_string(xattn_heads) + " heads");
      xq_ = &params_.add("fusion.xattn.wq", normal_matrix(d, a, fan_in(d), rng), true);
      xk_ = &params_.add("fusion.xattn.wk", normal_matrix(a, a, fan_in(a), rng), true);
      xv_ = &params_.add("fusion.xattn.wv", normal_matrix(a, a, fan_in(a), rng), true);
      xo_ = &params_.add("fusion.xattn.wo", normal_matrix(a, a, fan_in(a), rng), true);
      head_in = a + d;
      break;
  }
  head_w_ = add_head(params_, "head", head_in, rng);
  head_b_ = &params_.add("head.b", Matrix::Zero(1, 2), true);
}

std::string FusionClassifier::kind() const { return "fusion-" + to_string(fusion_); }

std::size_t FusionClassifier::dms_width() const {
  return mode_ == DmsMode::Hard ? schema_.dimension() : static_cast<std::size_t>(text_width_);
}

nlohmann::json FusionClassifier::config() const {
  return {{"fusion", to_string(fusion_)},
          {"dms", to_string(mode_)},
          {"encoder", encoder_.config().to_json()},
          {"schema", schema_.to_json()},
          {"vocab_size", vocab_size_},
          {"text_width", text_width_},
          {"finetune_encoder", finetune_},
          {"xattn_heads", xattn_heads_}};
}

Matrix FusionClassifier::dms_vector(const Example& ex) const {
  return dms_input(mode_, ex, schema_, table_);
}

Var FusionClassifier::cross_attend(Tape& tape, Var audio_tokens, Var dms_vec) const {
  if (fusion_ != FusionKind::CrossAttention)
    throw ConfigError("cross_attend: model is " + kind());
  Var q = ops::matmul(dms_vec, tape.param(*xq_));
  Var k = ops::matmul(audio_tokens, tape.param(*xk_));
  Var v = ops::matmul(audio_tokens, tape.param(*xv_));
  return ops::matmul(ops::attention(q, k, v, xattn_heads_, AttentionMask{}), tape.param(*xo_));
}

Var FusionClassifier::logits(Tape& tape, const Example& ex) const {
  Var tokens = audio_embedding(tape, *this, ex);
  Var dms = tape.constant(dms_vector(ex));
  Var features;
  switch (fusion_) {
    case FusionKind::Concat:
      features = ops::concat_cols(ops::masked_mean_rows(tokens), dms);
      break;
    case FusionKind::Add: {
      Var pa = ops::linear(ops::masked_mean_rows(tokens), tape.param(*pa_w_), tape.param(*pa_b_));
      Var pd = ops::linear(dms, tape.param(*pd_w_), tape.param(*pd_b_));
      features = ops::add(pa, pd);
      break;
    }
    case FusionKind::CrossAttention:
      features = ops::concat_cols(cross_attend(tape, tokens, dms), dms);
      break;
  }
  return ops::linear(features, tape.param(*head_w_), tape.param(*head_b_));
}

}  // namespace respllm::baselines
