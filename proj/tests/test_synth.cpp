#include "doctest.h"

#include "respllm/audio/frontend.hpp"
#include "respllm/core/random.hpp"
#include "respllm/data/synth.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace respllm;
using namespace respllm::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("respllm_test_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SourceSpec small_source(int n_train, int n_test) {
  SourceSpec s = xor_fusion_sources(n_train, n_test, 0.0)[0];
  return s;
}

// Mean log-mel energy over the filters whose centers fall inside [lo, hi].
double band_energy(const audio::Waveform& w, double lo, double hi) {
  const auto centers = audio::mel_center_frequencies();
  const audio::LogMelSpectrogram spec = audio::log_mel(audio::standardize(w));
  double sum = 0.0;
  int count = 0;
  for (std::size_t m = 0; m < centers.size(); ++m) {
    if (centers[m] < lo || centers[m] > hi) continue;
    sum += spec.values.col(static_cast<Eigen::Index>(m)).mean();
    ++count;
  }
  REQUIRE(count > 0);
  return sum / count;
}

}  // namespace

TEST_CASE("gen_waveform is deterministic and 8 s at 16 kHz") {
  const SourceSpec s = small_source(1, 1);
  const audio::Waveform a = gen_waveform(true, s, 42);
  const audio::Waveform b = gen_waveform(true, s, 42);
  CHECK(a.samples == b.samples);
  CHECK(a.samples.size() == audio::kClipSamples);
  CHECK(a.sample_rate == audio::kSampleRate);
  CHECK(gen_waveform(true, s, 43).samples != a.samples);
  CHECK(audio::standardize(a).samples.size() == a.samples.size());
}

TEST_CASE("marker raises band energy in every one of 100 seeded pairs") {
  const auto sources = xor_fusion_sources(1, 1, 0.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SourceSpec& s = sources[seed % sources.size()];
    const double lo = s.marker.band_lo_hz, hi = s.marker.band_hi_hz;
    const double with = band_energy(gen_waveform(true, s, seed), lo, hi);
    const double without = band_energy(gen_waveform(false, s, seed), lo, hi);
    CHECK(with > without);
  }
}

TEST_CASE("cohort counts, unique ids, clean labels follow the rule") {
  SourceSpec s = small_source(1500, 1000);
  s.fields.location = true;
  const std::vector<SourceSpec> specs{s};
  const CohortManifest m = gen_cohort(specs, 5);
  int train = 0, test = 0;
  std::set<std::string> ids;
  for (const CohortRow& row : m.rows) {
    (row.split == "train" ? train : test) += 1;
    ids.insert(row.sample_id);
    CHECK(row.label == (apply_rule(LabelRule::Xor, row.marker, row.symptom) ? 1 : 0));
    const bool has_fever = row.dms.symptoms &&
        std::find(row.dms.symptoms->begin(), row.dms.symptoms->end(), "fever") !=
            row.dms.symptoms->end();
    CHECK(has_fever == row.symptom);
  }
  CHECK(train == 1500);
  CHECK(test == 1000);
  CHECK(ids.size() == m.rows.size());
}

TEST_CASE("class balance within 2% of the configured prior over 10 seeds") {
  for (const LabelRule rule : {LabelRule::Xor, LabelRule::And, LabelRule::Or}) {
    for (const double noise : {0.0, 0.1}) {
      SourceSpec s = small_source(400, 100);
      s.rule = rule;
      s.label_noise = noise;
      s.marker_rate = 0.4;
      const std::vector<SourceSpec> specs{s};
      double pos = 0.0, rows = 0.0;
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const CohortManifest m = gen_cohort(specs, seed);
        double seed_pos = 0.0;
        for (const CohortRow& row : m.rows) seed_pos += row.label;
        // Without noise the stratified cells fix the rate up to rounding.
        if (noise == 0.0) CHECK(std::abs(seed_pos / m.rows.size() - s.expected_prior()) <= 0.005);
        pos += seed_pos;
        rows += static_cast<double>(m.rows.size());
      }
      CAPTURE(noise);
      CHECK(std::abs(pos / rows - s.expected_prior()) <= 0.02);
    }
  }
}

TEST_CASE("expected prior matches the four-cell formula") {
  SourceSpec s = small_source(1, 1);
  s.marker_rate = 0.3;
  s.symptom_rate = 0.6;
  s.label_noise = 0.0;
  CHECK(s.expected_prior() == doctest::Approx(0.3 * 0.4 + 0.7 * 0.6));
  s.rule = LabelRule::And;
  CHECK(s.expected_prior() == doctest::Approx(0.18));
  s.label_noise = 0.25;
  CHECK(s.expected_prior() == doctest::Approx(0.18 * 0.75 + 0.82 * 0.25));
}

TEST_CASE("cohort on disk is byte-identical across runs and reads back") {
  const std::vector<SourceSpec> specs{small_source(4, 2), zero_shot_target(3, 0.0)};
  const fs::path a = scratch_dir("a"), b = scratch_dir("b");
  const CohortManifest ma = gen_cohort(specs, 11, a);
  gen_cohort(specs, 11, b);
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  CHECK(slurp(a / "sources.json") == slurp(b / "sources.json"));
  for (const CohortRow& row : ma.rows) {
    CHECK(slurp(a / row.wav_path) == slurp(b / row.wav_path));
    CHECK(audio::read_wav(a / row.wav_path).samples ==
          row_waveform(row, ma.source(row.source_id)).samples);
  }

  const CohortManifest back = read_manifest(a);
  REQUIRE(back.rows.size() == ma.rows.size());
  CHECK(back.seed == 11);
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].sample_id == ma.rows[i].sample_id);
    CHECK(back.rows[i].dms == ma.rows[i].dms);
    CHECK(back.rows[i].label == ma.rows[i].label);
    CHECK(back.rows[i].audio_seed == ma.rows[i].audio_seed);
  }
  CHECK(back.source("T1").task.sound_type == "deep breathing");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("spec file round trip and I/O errors carry the path") {
  const fs::path dir = scratch_dir("spec");
  fs::create_directories(dir);
  const CohortSpecFile spec{9, xor_fusion_sources(10, 5, 0.05)};
  save_spec_file(dir / "s.json", spec);
  const CohortSpecFile back = load_spec_file(dir / "s.json");
  CHECK(back.seed == 9);
  REQUIRE(back.sources.size() == 3);
  CHECK(back.sources[2].to_json() == spec.sources[2].to_json());

  try {
    load_spec_file(dir / "missing.json");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
  }
  std::ofstream(dir / "junk.json") << "{ not json";
  CHECK_THROWS_AS(load_spec_file(dir / "junk.json"), InputError);
  CHECK_THROWS_AS(read_manifest(dir / "nowhere"), InputError);
  fs::remove_all(dir);
}

TEST_CASE("source spec validation") {
  SourceSpec s = small_source(1, 1);
  CHECK_NOTHROW(s.validate());
  SourceSpec bad = s;
  bad.n_train = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.label_noise = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.marker.band_hi_hz = 9000.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.fields.symptoms = false;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.source_id.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_label_rule("nand"), ConfigError);
  CHECK(parse_timbre(to_string(Timbre::Lung)) == Timbre::Lung);
}

TEST_CASE("zero-shot target wording and band are unseen by the sources") {
  const auto sources = xor_fusion_sources(1, 1, 0.0);
  const SourceSpec t = zero_shot_target(10, 0.0);
  for (const SourceSpec& s : sources) {
    CHECK(s.task.sound_type != t.task.sound_type);
    CHECK(s.task.condition != t.task.condition);
    const bool overlap = t.marker.band_lo_hz <= s.marker.band_hi_hz &&
                         s.marker.band_lo_hz <= t.marker.band_hi_hz;
    CHECK_FALSE(overlap);
  }
}
