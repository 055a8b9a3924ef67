#pragma once

#include "respllm/audio/frontend.hpp"
#include "respllm/text/templates.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace respllm::data {

enum class LabelRule { And, Xor, Or };
enum class Timbre { Cough, Breath, Lung };

std::string to_string(LabelRule r);
std::string to_string(Timbre t);
LabelRule parse_label_rule(const std::string& s);
Timbre parse_timbre(const std::string& s);

bool apply_rule(LabelRule rule, bool marker, bool symptom);

// Tone bursts planted in a frequency band.
struct MarkerSpec {
  double band_lo_hz = 800.0;
  double band_hi_hz = 1000.0;
  int bursts = 8;
  double burst_seconds = 0.25;
  double snr_lo_db = 0.0;  // burst RMS relative to the base signal RMS
  double snr_hi_db = 6.0;
};

// Which DMS fields a source records.
struct DmsFields {
  bool gender = true;
  bool age = true;
  bool medical_history = true;
  bool symptoms = true;
  bool location = false;
};

struct SourceSpec {
  std::string source_id;
  text::TaskSpec task;  // task.sound_type and task.condition are the T / C wording
  Timbre timbre = Timbre::Cough;
  int n_train = 0;
  int n_test = 0;
  DmsFields fields;
  MarkerSpec marker;
  LabelRule rule = LabelRule::Xor;
  std::string symptom = "fever";  // designated symptom entering the label rule
  double label_noise = 0.0;
  double marker_rate = 0.5;
  double symptom_rate = 0.5;

  void validate() const;
  // P(label = 1) for the configured rates, rule and noise.
  double expected_prior() const;
  nlohmann::json to_json() const;
  static SourceSpec from_json(const nlohmann::json& j);
};

struct CohortRow {
  std::string sample_id;
  std::string source_id;
  std::string wav_path;  // relative to the manifest directory
  text::DmsRecord dms;
  int label = 0;
  std::string split;  // "train" | "test"
  bool marker = false;       // planted audio factor
  bool symptom = false;      // planted DMS factor
  std::uint64_t audio_seed = 0;
};

struct CohortManifest {
  std::vector<CohortRow> rows;
  std::vector<SourceSpec> sources;
  std::uint64_t seed = 0;

  const SourceSpec& source(const std::string& id) const;
};

// 8 s at 16 kHz, quantized to 16-bit PCM levels so that writing and re-reading
// the WAV reproduces it exactly. Determined by (marker_present, spec, seed).
audio::Waveform gen_waveform(bool marker_present, const SourceSpec& spec, std::uint64_t seed);

// Samples factors, DMS records and labels for every source. Factor cells are
// stratified per split. With `out_dir`, WAVs go to out_dir/wav/ and the
// manifest to out_dir/manifest.jsonl.
CohortManifest gen_cohort(std::span<const SourceSpec> specs, std::uint64_t seed,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Rebuilds a row's audio without touching disk.
audio::Waveform row_waveform(const CohortRow& row, const SourceSpec& spec);

nlohmann::json row_to_json(const CohortRow& row);
CohortRow row_from_json(const nlohmann::json& j);
nlohmann::json dms_to_json(const text::DmsRecord& r);
text::DmsRecord dms_from_json(const nlohmann::json& j);

// One JSON object per line. Sources are written alongside in sources.json.
void write_manifest(const std::filesystem::path& dir, const CohortManifest& m);
CohortManifest read_manifest(const std::filesystem::path& dir);

// Spec file: {"seed": N, "sources": [SourceSpec...]}.
struct CohortSpecFile {
  std::uint64_t seed = 0;
  std::vector<SourceSpec> sources;
};
CohortSpecFile load_spec_file(const std::filesystem::path& path);
void save_spec_file(const std::filesystem::path& path, const CohortSpecFile& spec);

// Source library used by the experiments and the shipped configs.
std::vector<SourceSpec> xor_fusion_sources(int n_train, int n_test, double label_noise);
SourceSpec zero_shot_target(int n_test, double label_noise);
// Audio-only marker detection clips with random bands, for encoder pre-training.
std::vector<SourceSpec> encoder_pretraining_sources(int n_per_source);

}  // namespace respllm::data
