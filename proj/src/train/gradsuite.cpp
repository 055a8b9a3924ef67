#include "respllm/train/gradsuite.hpp"

#include "respllm/audio/encoder.hpp"
#include "respllm/audio/frontend.hpp"
#include "respllm/baselines/baselines.hpp"
#include "respllm/core/ops.hpp"
#include "respllm/core/random.hpp"
#include "respllm/model/lora.hpp"
#include "respllm/model/respllm.hpp"
#include "respllm/model/transformer.hpp"

#include <array>

namespace respllm::train {

namespace {

struct Suite {
  GradCheckOptions opts;
  Rng rng;
  std::vector<GradCheckResult> results;

  explicit Suite(const GradCheckOptions& o) : opts(o), rng(derive_seed(o.seed, "gradsuite")) {}

  Matrix randn(Eigen::Index r, Eigen::Index c, double s = 1.0) { return normal_matrix(r, c, s, rng); }

  void run(const std::string& name, ParameterSet& params, const std::function<Var(Tape&)>& loss) {
    results.push_back(check_gradients(name, params, loss, opts));
  }

  // loss = <op(...), R> for a fixed random R, so every output entry matters.
  void run_weighted(const std::string& name, ParameterSet& params,
                    const std::function<Var(Tape&)>& op) {
    Matrix probe;
    {
      Tape t;
      probe = op(t).value();
    }
    const Matrix r = randn(probe.rows(), probe.cols());
    run(name, params, [op, r](Tape& t) { return ops::weighted_sum(op(t), r); });
  }
};

Example synthetic_example(Rng& rng, int vocab, int lp, int ld, int label) {
  Example ex;
  ex.task_id = "grad";
  for (int i = 0; i < lp; ++i) ex.prompt_ids.push_back(2 + static_cast<int>(rng.below(vocab - 2)));
  for (int i = 0; i < ld; ++i) ex.dms_ids.push_back(2 + static_cast<int>(rng.below(vocab - 2)));
  Matrix patches = normal_matrix(audio::kPatches, audio::kPatchDim, 3.0, rng);
  patches.array() -= 6.0;
  ex.patches = std::make_shared<const Matrix>(std::move(patches));
  ex.label = label;
  return ex;
}

void perturb_lora(ParameterSet& params, Rng& rng) {
  for (Parameter* p : params.all())
    if (p->name.size() > 7 && p->name.compare(p->name.size() - 7, 7, ".lora_b") == 0)
      p->value = normal_matrix(p->value.rows(), p->value.cols(), 0.05, rng);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& opts) {
  Suite s(opts);

  {
    ParameterSet ps;
    Parameter& x = ps.add("x", s.randn(6, 5), true);
    Parameter& w = ps.add("w", s.randn(5, 4), true);
    Parameter& b = ps.add("b", s.randn(1, 4), true);
    s.run_weighted("linear", ps, [&](Tape& t) { return ops::linear(t.param(x), t.param(w), t.param(b)); });
    s.run("linear/sum", ps, [&](Tape& t) {
      Var y = ops::linear(t.param(x), t.param(w), t.param(b));
      return ops::weighted_sum(y, Matrix::Ones(y.rows(), y.cols()));
    });
  }
  {
    ParameterSet ps;
    Parameter& a = ps.add("a", s.randn(5, 7), true);
    Parameter& b = ps.add("b", s.randn(7, 6), true);
    Parameter& c = ps.add("c", s.randn(6, 7), true);
    s.run_weighted("matmul", ps, [&](Tape& t) { return ops::matmul(t.param(a), t.param(b)); });
    s.run_weighted("matmul_transposed", ps,
                   [&](Tape& t) { return ops::matmul_transposed(t.param(a), t.param(c)); });
  }
  {
    ParameterSet ps;
    Parameter& a = ps.add("a", s.randn(6, 9), true);
    Parameter& b = ps.add("b", s.randn(6, 9), true);
    Parameter& r = ps.add("r", s.randn(1, 9), true);
    s.run_weighted("add", ps, [&](Tape& t) { return ops::add(t.param(a), t.param(b)); });
    s.run_weighted("add_row_broadcast", ps,
                   [&](Tape& t) { return ops::add_row_broadcast(t.param(a), t.param(r)); });
    s.run_weighted("scale", ps, [&](Tape& t) { return ops::scale(t.param(a), -1.7); });
    s.run_weighted("gelu", ps, [&](Tape& t) { return ops::gelu(t.param(a)); });
    s.run_weighted("softmax", ps, [&](Tape& t) { return ops::softmax(t.param(a)); });
    s.run_weighted("concat_cols", ps,
                   [&](Tape& t) { return ops::concat_cols(t.param(a), t.param(b)); });
    s.run_weighted("concat_rows/slice_rows", ps, [&](Tape& t) {
      const std::array<Var, 2> parts{t.param(a), t.param(b)};
      return ops::slice_rows(ops::concat_rows(parts), 3, 7);
    });
    s.run_weighted("masked_mean_rows", ps, [&](Tape& t) {
      return ops::masked_mean_rows(t.param(a), std::vector<char>{1, 0, 1, 1, 0, 1});
    });
  }
  {
    ParameterSet ps;
    Parameter& x = ps.add("x", s.randn(5, 12, 2.0), true);
    Parameter& g = ps.add("gamma", s.randn(1, 12), true);
    Parameter& b = ps.add("beta", s.randn(1, 12), true);
    s.run_weighted("layer_norm", ps,
                   [&](Tape& t) { return ops::layer_norm(t.param(x), t.param(g), t.param(b)); });
  }
  {
    ParameterSet ps;
    Parameter& table = ps.add("table", s.randn(10, 6), true);
    const std::vector<int> ids{3, 1, 3, 9, 0, 3};
    s.run_weighted("gather_rows", ps, [&](Tape& t) { return ops::gather_rows(t.param(table), ids); });
  }
  {
    ParameterSet ps;
    Parameter& z = ps.add("logits", s.randn(1, 2, 2.0), true);
    s.run("cross_entropy/0", ps, [&](Tape& t) { return ops::cross_entropy(t.param(z), 0); });
    s.run("cross_entropy/1", ps, [&](Tape& t) { return ops::cross_entropy(t.param(z), 1); });
  }
  {
    ParameterSet ps;
    Parameter& q = ps.add("q", s.randn(7, 8), true);
    Parameter& k = ps.add("k", s.randn(7, 8), true);
    Parameter& v = ps.add("v", s.randn(7, 8), true);
    AttentionMask mask;
    mask.causal = true;
    mask.key_valid = {1, 1, 1, 1, 1, 0, 0};
    s.run_weighted("attention", ps, [&](Tape& t) {
      return ops::attention(t.param(q), t.param(k), t.param(v), 2, mask);
    });
  }
  {
    ParameterSet ps;
    const int w = 8;
    Parameter& x = ps.add("x", s.randn(6, w), true);
    Parameter& wq = ps.add("wq", s.randn(w, w, 0.4), true);
    Parameter& wk = ps.add("wk", s.randn(w, w, 0.4), true);
    Parameter& wv = ps.add("wv", s.randn(w, w, 0.4), true);
    Parameter& wo = ps.add("wo", s.randn(w, w, 0.4), true);
    AttentionMask causal;
    causal.causal = true;
    s.run_weighted("multi_head_attention", ps, [&](Tape& t) {
      return ops::multi_head_attention(t.param(x), t.param(wq), t.param(wk), t.param(wv),
                                       t.param(wo), 2, causal);
    });
  }
  {
    ParameterSet ps;
    Parameter& x = ps.add("x", s.randn(5, 10), true);
    Parameter& w = ps.add("w", s.randn(10, 8), false);
    LoraAdapter ad = make_lora(ps, "lin", 10, 8, 4, 8.0, s.rng);
    perturb_lora(ps, s.rng);
    s.run_weighted("lora_linear", ps, [&](Tape& t) { return lora_linear(t, t.param(x), w, ad); });
  }
  {
    ParameterSet ps;
    Parameter& x = ps.add("x", s.randn(6, 8), true);
    TransformerBlock blk = make_transformer_block(ps, "blk", 8, 2, 4, s.rng, true);
    blk.q_lora = make_lora(ps, "blk.attn.wq", 8, 8, 2, 4.0, s.rng);
    blk.k_lora = make_lora(ps, "blk.attn.wk", 8, 8, 2, 4.0, s.rng);
    perturb_lora(ps, s.rng);
    AttentionMask mask;
    mask.causal = true;
    mask.key_valid = {1, 1, 1, 1, 1, 0};
    s.run_weighted("transformer_block", ps,
                   [&](Tape& t) { return blk.forward(t, t.param(x), mask, true); });
  }

  audio::AudioEncoderConfig enc;
  enc.width = 16;
  enc.heads = 2;
  enc.layers = 1;
  {
    ParameterSet ps;
    audio::AudioEncoder encoder(ps, enc, s.rng, true);
    Parameter& pw = ps.add("projector.w", s.randn(16, 12, 0.25), true);
    Parameter& pb = ps.add("projector.b", s.randn(1, 12, 0.1), true);
    Matrix patches = s.randn(audio::kPatches, audio::kPatchDim, 3.0);
    patches.array() -= 6.0;
    s.run_weighted("audio_encoder+project", ps, [&](Tape& t) {
      return audio::project(t, encoder.encode(t, patches), pw, pb);
    });
  }

  RespLLMConfig cfg;
  cfg.width = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.lora_rank = 4;
  cfg.lora_alpha = 8.0;
  cfg.vocab_size = 40;
  cfg.max_len = 128;
  cfg.encoder = enc;
  {
    RespLLM model(cfg, derive_seed(opts.seed, "respllm"));
    perturb_lora(model.parameters(), s.rng);
    const Example ex = synthetic_example(s.rng, cfg.vocab_size, 9, 6, 1);
    s.run("respllm/loss", model.parameters(), [&](Tape& t) {
      return ops::cross_entropy(model.logits(t, ex), ex.label);
    });
    // Padded forward: pads must not leak into the gradient.
    s.run("respllm/loss_padded", model.parameters(), [&](Tape& t) {
      return ops::cross_entropy(model.forward(t, ex, true, 100).logits, ex.label);
    });
  }

  baselines::DmsSchema schema;
  schema.medical_history = {"asthma", "copd"};
  schema.symptoms = {"cough", "fever", "wheezing"};
  schema.locations = {"trachea", "unknown"};
  Example bex = synthetic_example(s.rng, cfg.vocab_size, 4, 7, 0);
  text::DmsRecord rec;
  rec.gender = "female";
  rec.age = 42;
  rec.symptoms = std::vector<std::string>{"fever", "cough"};
  bex.hard_dms = baselines::dms_hard_encode(rec, schema);
  auto baseline = [&](const std::string& name, Classifier& m) {
    s.run(name, m.parameters(),
          [&](Tape& t) { return ops::cross_entropy(m.logits(t, bex), bex.label); });
  };
  {
    baselines::AudioOnlyClassifier m(enc, 1, true);
    baseline("audio/loss", m);
  }
  {
    baselines::DmsOnlyClassifier m(baselines::DmsMode::Hard, schema, cfg.vocab_size, 12, 2);
    baseline("dms-hard/loss", m);
  }
  {
    baselines::DmsOnlyClassifier m(baselines::DmsMode::Soft, schema, cfg.vocab_size, 12, 3);
    baseline("dms-soft/loss", m);
  }
  for (auto kind : {baselines::FusionKind::Concat, baselines::FusionKind::Add,
                    baselines::FusionKind::CrossAttention})
    for (auto mode : {baselines::DmsMode::Hard, baselines::DmsMode::Soft}) {
      baselines::FusionClassifier m(kind, mode, enc, schema, cfg.vocab_size, 12, 4, true, 2);
      baseline(m.kind() + "/" + baselines::to_string(mode) + "/loss", m);
    }
  return s.results;
}

}  // namespace respllm::train
