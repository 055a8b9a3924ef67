#include "doctest.h"

#include "respllm/baselines/baselines.hpp"
#include "respllm/core/ops.hpp"

#include <set>

using namespace respllm;
using namespace respllm::baselines;
using text::DmsRecord;

namespace {

DmsSchema test_schema() {
  DmsRecord a, b;
  a.gender = "female";
  a.age = 40;
  a.medical_history = std::vector<std::string>{"asthma", "diabetes"};
  a.symptoms = std::vector<std::string>{"cough", "fever", "wheezing"};
  a.location = "trachea";
  b.symptoms = std::vector<std::string>{"sore throat"};
  b.location = "anterior left";
  const std::vector<DmsRecord> recs{a, b};
  return DmsSchema::build(recs);
}

audio::AudioEncoderConfig small_encoder() {
  audio::AudioEncoderConfig cfg;
  cfg.width = 32;
  return cfg;
}

Example audio_example(Rng& rng, const DmsSchema& schema) {
  Example ex;
  ex.task_id = "t";
  ex.patches = std::make_shared<Matrix>(normal_matrix(64, 256, 3.0, rng));
  DmsRecord r;
  r.symptoms = std::vector<std::string>{"cough"};
  ex.hard_dms = dms_hard_encode(r, schema);
  ex.dms_ids = {2, 3, 4};
  return ex;
}

}  // namespace

TEST_CASE("hard DMS vector layout") {
  const DmsSchema schema = test_schema();
  CHECK(schema.dimension() == 3 + 1 + 2 + 4 + 3);
  CHECK(schema.locations.back() == "unknown");

  const RowVector empty = dms_hard_encode(DmsRecord{}, schema);
  CHECK(empty.size() == static_cast<Eigen::Index>(schema.dimension()));
  CHECK(empty.isZero(0.0));

  DmsRecord r;
  r.age = 50;
  const RowVector aged = dms_hard_encode(r, schema);
  CHECK(aged(static_cast<Eigen::Index>(schema.age_offset())) == 0.5);
  CHECK(aged.cwiseAbs().sum() == 0.5);

  DmsRecord x, y;
  x.symptoms = std::vector<std::string>{"cough", "fever"};
  y.symptoms = std::vector<std::string>{"cough"};
  const RowVector dx = dms_hard_encode(x, schema), dy = dms_hard_encode(y, schema);
  CHECK((dx.array() != dy.array()).count() == 1);

  DmsRecord unseen;
  unseen.symptoms = std::vector<std::string>{"hiccups"};
  CHECK(dms_hard_encode(unseen, schema).isZero(0.0));
}

TEST_CASE("hard DMS encoding is injective within the schema") {
  const DmsSchema schema = test_schema();
  Rng rng(1);
  std::set<std::vector<double>> seen_vectors;
  std::vector<DmsRecord> seen_records;
  for (int trial = 0; trial < 300; ++trial) {
    DmsRecord r;
    if (rng.bernoulli(0.7)) r.gender = schema.genders[rng.below(3)];
    // Age 0 shares the all-zero age slot with a missing age.
    if (rng.bernoulli(0.7)) r.age = 1 + static_cast<int>(rng.below(90));
    std::vector<std::string> m, s;
    for (const auto& v : schema.medical_history) if (rng.bernoulli(0.5)) m.push_back(v);
    for (const auto& v : schema.symptoms) if (rng.bernoulli(0.5)) s.push_back(v);
    if (!m.empty()) r.medical_history = m;
    if (!s.empty()) r.symptoms = s;
    if (rng.bernoulli(0.5)) r.location = schema.locations[rng.below(schema.locations.size())];
    if (std::find(seen_records.begin(), seen_records.end(), r) != seen_records.end()) continue;
    seen_records.push_back(r);
    const RowVector v = dms_hard_encode(r, schema);
    CHECK(seen_vectors.insert(std::vector<double>(v.data(), v.data() + v.size())).second);
  }
}

TEST_CASE("soft DMS vector is the mean of frozen table rows") {
  Rng rng(2);
  const Matrix table = normal_matrix(10, 6, 1.0, rng);
  const std::vector<int> ids{3, 5, 3};
  const RowVector v = dms_soft_encode(ids, table);
  const RowVector expected = (2 * table.row(3) + table.row(5)) / 3.0;
  CHECK((v - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(dms_soft_encode({}, table).isZero(0.0));
}

TEST_CASE("audio-only: two-way softmax and no DMS path") {
  const DmsSchema schema = test_schema();
  AudioOnlyClassifier model(small_encoder(), 3);
  CHECK_FALSE(model.encoder_frozen());
  Rng rng(4);
  Example ex = audio_example(rng, schema);
  const RowVector p = model.probabilities(ex);
  CHECK(p.size() == 2);
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);

  Example other = ex;
  DmsRecord r;
  r.gender = "male";
  r.age = 80;
  other.hard_dms = dms_hard_encode(r, schema);
  other.dms_ids = {7, 8};
  CHECK(model.probabilities(other) == p);
}

TEST_CASE("concat fusion head sees A + dim(dms) inputs") {
  const DmsSchema schema = test_schema();
  FusionClassifier hard(FusionKind::Concat, DmsMode::Hard, small_encoder(), schema, 20, 64, 5);
  CHECK(hard.parameters().at("head.w").value.rows() ==
        static_cast<Eigen::Index>(32 + schema.dimension()));
  FusionClassifier soft(FusionKind::Concat, DmsMode::Soft, small_encoder(), schema, 20, 16, 5);
  CHECK(soft.parameters().at("head.w").value.rows() == 32 + 16);
  CHECK(soft.kind() == "fusion-concat");

  Rng rng(6);
  Example ex = audio_example(rng, schema);
  ex.hard_dms = RowVector::Zero(3);
  CHECK_THROWS_AS(hard.predict_proba(ex), DimensionError);
}

TEST_CASE("add fusion with a zeroed DMS projection reduces to the audio head") {
  const DmsSchema schema = test_schema();
  FusionClassifier model(FusionKind::Add, DmsMode::Hard, small_encoder(), schema, 20, 64, 7);
  model.parameters().at("fusion.dms_proj.w").value.setZero();
  model.parameters().at("fusion.dms_proj.b").value.setZero();
  Rng rng(8);
  const Example ex = audio_example(rng, schema);

  const Matrix z = model.encoder()->encode(*ex.patches);
  const RowVector pooled = z.colwise().mean();
  const auto& pw = model.parameters().at("fusion.audio_proj.w").value;
  const auto& pb = model.parameters().at("fusion.audio_proj.b").value;
  const auto& hw = model.parameters().at("head.w").value;
  const auto& hb = model.parameters().at("head.b").value;
  const RowVector expected = (pooled * pw + pb) * hw + hb;
  Tape t;
  CHECK((model.logits(t, ex).value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-attention over identical tokens returns that token's projection") {
  const DmsSchema schema = test_schema();
  FusionClassifier model(FusionKind::CrossAttention, DmsMode::Hard, small_encoder(), schema, 20,
                         64, 9);
  Rng rng(10);
  Matrix tokens(64, 32);
  tokens.rowwise() = normal_matrix(1, 32, 1.0, rng).row(0);
  const RowVector expected = tokens.row(0) * model.parameters().at("fusion.xattn.wv").value *
                             model.parameters().at("fusion.xattn.wo").value;
  for (int trial = 0; trial < 3; ++trial) {
    Tape t;
    const Matrix query = normal_matrix(1, static_cast<Eigen::Index>(schema.dimension()), 2.0, rng);
    const Matrix out = model.cross_attend(t, t.constant(tokens), t.constant(query)).value();
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  FusionClassifier concat(FusionKind::Concat, DmsMode::Hard, small_encoder(), schema, 20, 64, 9);
  Tape t;
  CHECK_THROWS_AS(concat.cross_attend(t, t.constant(tokens), t.constant(Matrix::Zero(1, 13))),
                  ConfigError);
}

TEST_CASE("dms-only classifiers") {
  const DmsSchema schema = test_schema();
  DmsOnlyClassifier hard(DmsMode::Hard, schema, 0, 0, 11);
  DmsOnlyClassifier soft(DmsMode::Soft, schema, 20, 16, 11);
  CHECK(hard.kind() == "dms-hard");
  CHECK(soft.kind() == "dms-soft");
  CHECK(soft.parameters().trainable_count() == 16 * 2 + 2);
  CHECK_FALSE(soft.parameters().at("text.embedding").trainable);
  Rng rng(12);
  const Example ex = audio_example(rng, schema);
  CHECK(std::abs(hard.probabilities(ex).sum() - 1.0) < 1e-12);
  CHECK(std::abs(soft.probabilities(ex).sum() - 1.0) < 1e-12);
  CHECK_THROWS_AS(DmsOnlyClassifier(DmsMode::Soft, schema, 0, 16, 1), ConfigError);
  CHECK(parse_dms_mode("soft") == DmsMode::Soft);
  CHECK_THROWS_AS(parse_dms_mode("medium"), ConfigError);
}

TEST_CASE("schema JSON round trip") {
  const DmsSchema schema = test_schema();
  CHECK(DmsSchema::from_json(schema.to_json()) == schema);
}
