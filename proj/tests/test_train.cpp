#include "doctest.h"

#include "respllm/train/experiment.hpp"
#include "respllm/train/gradsuite.hpp"
#include "respllm/core/ops.hpp"
#include "respllm/train/metrics.hpp"

#include <cstring>
#include <set>

using namespace respllm;
using namespace respllm::train;

namespace {

// Three XOR sources plus the held-out target at a size that builds in seconds.
const PreparedData& toy_data() {
  static const PreparedData data = [] {
    auto specs = data::xor_fusion_sources(16, 40, 0.0);
    specs.push_back(data::zero_shot_target(40, 0.0));
    const data::CohortManifest m = data::gen_cohort(specs, 21);
    PrepareOptions po;
    po.held_out_tasks = {"T1"};
    return prepare_data(m, synthetic_loader(m), po);
  }();
  return data;
}

ModelOptions toy_options() {
  ModelOptions o;
  o.respllm.encoder.width = 32;
  o.respllm.lora_rank = 4;
  o.respllm.lora_alpha = 8.0;
  o.text_width = 16;
  return o;
}

std::unique_ptr<Classifier> toy_model(const std::string& kind, std::uint64_t seed) {
  const PreparedData& d = toy_data();
  return make_model(kind, toy_options(), d.schema, static_cast<int>(d.vocab.size()), seed);
}

bool is_llm_base(const Parameter& p) {
  return p.name.rfind("llm.", 0) == 0 && p.name.find("lora") == std::string::npos;
}

double pair_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return num / den;
}

std::uint64_t read_u64(const std::string& b, std::size_t at) {
  std::uint64_t v = 0;
  std::memcpy(&v, b.data() + at, sizeof v);
  return v;
}

// Offset of the parameter count, past magic, version, header and vocabulary.
std::size_t parameter_section(const std::string& b) {
  std::size_t at = 8 + 4;
  at += 8 + read_u64(b, at);
  at += 8 + read_u64(b, at);
  return at;
}

}  // namespace

TEST_CASE("instruction records mirror the manifest and the renderers") {
  const PreparedData& d = toy_data();
  CHECK(d.records.size() == d.manifest.rows.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& row = d.manifest.rows[i];
    const auto& rec = d.records[i];
    CHECK(rec.sample_id == row.sample_id);
    CHECK(rec.label == row.label);
    CHECK(rec.prompt_text == text::render_task_prompt(d.manifest.source(row.source_id).task));
    CHECK(rec.dms_text == text::render_dms(row.dms));
  }
  CHECK(d.train.size() == 3 * 16);
  CHECK(d.test.size() == 3 * 40);
  CHECK(d.held_out.size() == 40);

  TaskSpecMap partial = task_specs(d.manifest);
  partial.erase("S2");
  try {
    build_instruction_dataset(d.manifest, partial);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'S2'") != std::string::npos);
  }
}

TEST_CASE("epoch shuffling mixes sources and is seed-determined") {
  // 10 records of task A then 10 of task B. A window of 8 holds one task only
  // with probability 2 C(10,8) / C(20,8).
  const double p_single = 2.0 * 45.0 / 125970.0;
  int windows = 0, mixed = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    EpochShuffler sh(seed);
    for (int epoch = 0; epoch < 2; ++epoch) {
      const auto order = sh.next(20);
      for (std::size_t start = 0; start + 8 <= order.size(); ++start) {
        bool a = false, b = false;
        for (std::size_t k = start; k < start + 8; ++k) (order[k] < 10 ? a : b) = true;
        ++windows;
        mixed += a && b;
      }
    }
  }
  CHECK(1.0 - static_cast<double>(mixed) / windows <= 10 * p_single);

  EpochShuffler x(5), y(5), z(6);
  const auto ox = x.next(20);
  CHECK(ox == y.next(20));
  CHECK(ox != z.next(20));
  CHECK(x.next(20) != ox);

  EpochShuffler resumed(5);
  resumed.next(20);
  EpochShuffler copy(0);
  copy.restore(resumed.state());
  CHECK(copy.next(20) == resumed.next(20));
}

TEST_CASE("zero training steps leave the model at its initialization") {
  const PreparedData& d = toy_data();
  auto model = toy_model("respllm", 3);
  const std::string before = serialize_checkpoint(*model, d.vocab, TrainState{});
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainState st;
  CHECK(train::train(*model, d.train, cfg, st).empty());
  CHECK(serialize_checkpoint(*model, d.vocab, TrainState{}) == before);
  CHECK(st.step == 0);
}

TEST_CASE("training moves only trainable parameters and logs every step") {
  const PreparedData& d = toy_data();
  auto model = toy_model("respllm", 4);
  const auto frozen = [](const Parameter& p) { return !p.trainable; };
  const std::uint64_t frozen_before = hash_parameters(model->parameters(), frozen);
  const std::uint64_t base_before = hash_parameters(model->parameters(), is_llm_base);
  const std::uint64_t all_before = hash_parameters(model->parameters());
  TrainConfig cfg;
  cfg.epochs = 2;
  TrainState st;
  st.seed = 4;
  const auto curve = train::train(*model, d.train, cfg, st);
  CHECK(curve.size() == 2 * 3);
  CHECK(st.step == 6);
  CHECK(st.trained_tasks == std::vector<std::string>{"S1", "S2", "S3"});
  CHECK(hash_parameters(model->parameters(), frozen) == frozen_before);
  CHECK(hash_parameters(model->parameters(), is_llm_base) == base_before);
  CHECK(hash_parameters(model->parameters()) != all_before);

  const std::string csv = loss_curve_csv(curve);
  CHECK(csv.rfind("step,epoch,loss,lr\n1,0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK_THROWS_AS(train::train(*model, std::span<const Example>{}, cfg, st), InputError);
}

TEST_CASE("identical seeds give identical loss curves") {
  const PreparedData& d = toy_data();
  std::uint64_t hashes[2];
  for (int run = 0; run < 2; ++run) {
    auto model = toy_model("fusion-concat", 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    TrainState st;
    st.seed = 8;
    hashes[run] = hash_loss_curve(train::train(*model, d.train, cfg, st));
  }
  CHECK(hashes[0] == hashes[1]);
}

TEST_CASE("32-sample memorization reaches loss below 0.05 within 500 steps") {
  const PreparedData& d = toy_data();
  std::vector<Example> small(d.train.begin(), d.train.begin() + 32);
  auto model = toy_model("respllm", 5);
  cache_encodings(small, *model->encoder(), true);
  TrainConfig cfg;
  cfg.max_steps = 500;
  cfg.optim.lr = 3e-3;
  TrainState st;
  st.seed = 5;
  train::train(*model, small, cfg, st);
  double loss = 0.0;
  for (const Example& ex : small) {
    Tape t;
    loss += ops::cross_entropy(model->logits(t, ex), ex.label).value()(0, 0);
  }
  CHECK(loss / small.size() < 0.05);
}

TEST_CASE("auroc examples, tie rule and undefined metric") {
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auroc(std::vector<double>{0.9, 0.2, 0.8, 0.3}, std::vector<int>{1, 0, 0, 1}) == 0.75);
  CHECK(auroc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
                  UndefinedMetricError);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}),
                  std::invalid_argument);
}

TEST_CASE("auroc equals pair counting on 200 random instances") {
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(2 + rng.below(49));
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool ties = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max(worst, std::abs(auroc(s, y) - pair_auroc(s, y)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("evaluate is deterministic and sits near chance before training") {
  const PreparedData& d = toy_data();
  double mean = 0.0;
  constexpr int kSeeds = 4;
  for (int seed = 0; seed < kSeeds; ++seed) {
    auto model = toy_model("respllm", 100 + seed);
    const EvalReport a = evaluate(*model, d.test, seed);
    const EvalReport b = evaluate(*model, d.test, seed);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.tasks.size() == 3);
    for (const TaskReport& t : a.tasks) CHECK(t.n == 40);
    mean += *a.mean_auroc() / kSeeds;
  }
  CHECK(std::abs(mean - 0.5) <= 0.1);
}

TEST_CASE("eval report omits AUROC for single-class tasks") {
  const PreparedData& d = toy_data();
  auto model = toy_model("dms-hard", 1);
  std::vector<Example> one_class;
  for (const Example& ex : d.test)
    if (ex.label == 1) one_class.push_back(ex);
  std::vector<Example> mixed = one_class;
  for (const Example& ex : d.held_out) mixed.push_back(ex);
  const EvalReport r = evaluate(*model, mixed);
  for (const TaskReport& t : r.tasks) {
    if (t.task_id == "T1") CHECK(t.auroc.has_value());
    else CHECK_FALSE(t.auroc.has_value());
  }
  CHECK(r.mean_auroc() == r.task("T1").auroc);
  CHECK(r.to_json()["tasks"][0]["auroc"].is_null());
  CHECK(r.table().find("T1") != std::string::npos);
}

TEST_CASE("zero-shot contract") {
  const PreparedData& d = toy_data();
  auto model = toy_model("respllm", 6);
  TrainConfig cfg;
  cfg.max_steps = 2;
  TrainState st;
  st.seed = 6;
  train::train(*model, d.train, cfg, st);
  const std::uint64_t before = hash_parameters(model->parameters());
  const EvalReport r = zero_shot(*model, d.held_out, st);
  CHECK(r.zero_shot);
  CHECK(r.parameter_hash == before);
  CHECK(hash_parameters(model->parameters()) == before);
  CHECK(r.tasks.size() == 1);
  CHECK_THROWS_AS(zero_shot(*model, d.test, st), ContractViolation);
}

TEST_CASE("checkpoint round trip is byte-identical and forward-exact") {
  const PreparedData& d = toy_data();
  for (const char* kind : kModelKinds) {
    CAPTURE(kind);
    auto model = toy_model(kind, 9);
    TrainConfig cfg;
    cfg.max_steps = 1;
    TrainState st;
    st.seed = 9;
    train::train(*model, d.train, cfg, st);
    const std::string bytes = serialize_checkpoint(*model, d.vocab, st);
    Checkpoint back = parse_checkpoint(bytes);
    CHECK(serialize_checkpoint(*back.model, back.vocab, back.state) == bytes);
    CHECK(back.state.step == 1);
    CHECK(back.vocab.serialize() == d.vocab.serialize());
    for (std::size_t i = 0; i < 5; ++i) {
      Tape t1, t2;
      const Matrix a = model->logits(t1, d.test[i]).value();
      const Matrix b = back.model->logits(t2, d.test[i]).value();
      CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    }
  }
}

TEST_CASE("checkpoint loader rejects bad version and mismatched shapes") {
  const PreparedData& d = toy_data();
  auto model = toy_model("respllm", 10);
  const std::string bytes = serialize_checkpoint(*model, d.vocab, TrainState{});

  std::string bad_version = bytes;
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(bad_version.data() + 8, &v, sizeof v);
  CHECK_THROWS_AS(parse_checkpoint(bad_version), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), CheckpointError);

  ModelOptions wide = toy_options();
  wide.respllm.lora_rank = 8;
  auto other = make_model("respllm", wide, d.schema, static_cast<int>(d.vocab.size()), 10);
  const std::string other_bytes = serialize_checkpoint(*other, d.vocab, TrainState{});
  const std::string spliced =
      bytes.substr(0, parameter_section(bytes)) + other_bytes.substr(parameter_section(other_bytes));
  try {
    parse_checkpoint(spliced);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }
}

TEST_CASE("run_model refuses encodings from a foreign encoder") {
  auto specs = data::xor_fusion_sources(4, 4, 0.0);
  const data::CohortManifest m = data::gen_cohort(specs, 2);
  ModelOptions o = toy_options();
  baselines::AudioOnlyClassifier enc(o.respllm.encoder, 77, true);
  PrepareOptions po;
  po.encoder_model = &enc;
  po.keep_patches = false;
  const PreparedData d = prepare_data(m, synthetic_loader(m), po);
  TrainConfig cfg;
  cfg.max_steps = 1;
  CHECK_THROWS_AS(run_model("respllm", o, cfg, d, nullptr, 1), ContractViolation);
  CHECK_THROWS_AS(run_model("audio", o, cfg, d, &enc, 1), ContractViolation);
  const RunResult r = run_model("respllm", o, cfg, d, &enc, 1);
  CHECK(r.curve.size() == 1);
  CHECK(r.test.tasks.size() == 3);
  CHECK_FALSE(r.held_out.has_value());
}

TEST_CASE("gradient suite passes") {
  GradCheckOptions opts;
  opts.coordinates = 20;
  for (const GradCheckResult& r : run_gradient_suite(opts)) {
    CAPTURE(r.name);
    CHECK(r.passed);
  }
}
