#include "respllm/data/synth.hpp"

#include "respllm/core/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace respllm::data {
namespace fs = std::filesystem;

std::string to_string(LabelRule r) {
  switch (r) {
    case LabelRule::And: return "and";
    case LabelRule::Xor: return "xor";
    case LabelRule::Or: return "or";
  }
  return "?";
}

std::string to_string(Timbre t) {
  switch (t) {
    case Timbre::Cough: return "cough";
    case Timbre::Breath: return "breath";
    case Timbre::Lung: return "lung";
  }
  return "?";
}

LabelRule parse_label_rule(const std::string& s) {
  if (s == "and") return LabelRule::And;
  if (s == "xor") return LabelRule::Xor;
  if (s == "or") return LabelRule::Or;
  throw ConfigError("unknown label rule '" + s + "' (expected and|xor|or)");
}

Timbre parse_timbre(const std::string& s) {
  if (s == "cough") return Timbre::Cough;
  if (s == "breath") return Timbre::Breath;
  if (s == "lung") return Timbre::Lung;
  throw ConfigError("unknown timbre '" + s + "' (expected cough|breath|lung)");
}

bool apply_rule(LabelRule rule, bool marker, bool symptom) {
  switch (rule) {
    case LabelRule::And: return marker && symptom;
    case LabelRule::Xor: return marker != symptom;
    case LabelRule::Or: return marker || symptom;
  }
  return false;
}

void SourceSpec::validate() const {
  const std::string where = "source '" + source_id + "': ";
  if (source_id.empty()) throw ConfigError("source spec: empty source_id");
  if (n_train < 0 || n_test < 0) throw ConfigError(where + "negative sample counts");
  if (!(label_noise >= 0.0 && label_noise < 0.5))
    throw ConfigError(where + "label_noise must lie in [0, 0.5)");
  if (!(marker_rate >= 0.0 && marker_rate <= 1.0) || !(symptom_rate >= 0.0 && symptom_rate <= 1.0))
    throw ConfigError(where + "rates must lie in [0, 1]");
  if (!(marker.band_lo_hz > 0.0 && marker.band_hi_hz >= marker.band_lo_hz &&
        marker.band_hi_hz < audio::kSampleRate / 2.0))
    throw ConfigError(where + "marker band must satisfy 0 < lo <= hi < 8000 Hz");
  if (marker.bursts < 1 || !(marker.burst_seconds > 0.0) || marker.burst_seconds > 1.0)
    throw ConfigError(where + "marker needs >= 1 burst of (0, 1] s");
  if (marker.snr_hi_db < marker.snr_lo_db) throw ConfigError(where + "snr range reversed");
  if (symptom_rate > 0.0 && (!fields.symptoms || symptom.empty()))
    throw ConfigError(where + "a designated symptom requires the symptoms field");
}

double SourceSpec::expected_prior() const {
  double clean = 0.0;
  for (int m = 0; m < 2; ++m)
    for (int s = 0; s < 2; ++s) {
      const double p = (m ? marker_rate : 1.0 - marker_rate) * (s ? symptom_rate : 1.0 - symptom_rate);
      if (apply_rule(rule, m == 1, s == 1)) clean += p;
    }
  return clean * (1.0 - label_noise) + (1.0 - clean) * label_noise;
}

nlohmann::json SourceSpec::to_json() const {
  return {{"source_id", source_id},
          {"dataset", task.dataset},
          {"sound_type", task.sound_type},
          {"condition", task.condition},
          {"positive", task.positive},
          {"negative", task.negative},
          {"timbre", to_string(timbre)},
          {"n_train", n_train},
          {"n_test", n_test},
          {"fields",
           {{"gender", fields.gender},
            {"age", fields.age},
            {"medical_history", fields.medical_history},
            {"symptoms", fields.symptoms},
            {"location", fields.location}}},
          {"marker",
           {{"band_hz", {marker.band_lo_hz, marker.band_hi_hz}},
            {"bursts", marker.bursts},
            {"burst_seconds", marker.burst_seconds},
            {"snr_db", {marker.snr_lo_db, marker.snr_hi_db}}}},
          {"label_rule", to_string(rule)},
          {"symptom", symptom},
          {"label_noise", label_noise},
          {"marker_rate", marker_rate},
          {"symptom_rate", symptom_rate}};
}

SourceSpec SourceSpec::from_json(const nlohmann::json& j) {
  SourceSpec s;
  s.source_id = j.at("source_id").get<std::string>();
  s.task.dataset = j.at("dataset").get<std::string>();
  s.task.sound_type = j.at("sound_type").get<std::string>();
  s.task.condition = j.at("condition").get<std::string>();
  s.task.positive = j.value("positive", std::string("positive"));
  s.task.negative = j.value("negative", std::string("negative"));
  s.timbre = parse_timbre(j.value("timbre", std::string("cough")));
  s.n_train = j.value("n_train", 0);
  s.n_test = j.value("n_test", 0);
  if (j.contains("fields")) {
    const auto& f = j.at("fields");
    s.fields.gender = f.value("gender", s.fields.gender);
    s.fields.age = f.value("age", s.fields.age);
    s.fields.medical_history = f.value("medical_history", s.fields.medical_history);
    s.fields.symptoms = f.value("symptoms", s.fields.symptoms);
    s.fields.location = f.value("location", s.fields.location);
  }
  if (j.contains("marker")) {
    const auto& m = j.at("marker");
    if (m.contains("band_hz")) {
      s.marker.band_lo_hz = m.at("band_hz").at(0).get<double>();
      s.marker.band_hi_hz = m.at("band_hz").at(1).get<double>();
    }
    s.marker.bursts = m.value("bursts", s.marker.bursts);
    s.marker.burst_seconds = m.value("burst_seconds", s.marker.burst_seconds);
    if (m.contains("snr_db")) {
      s.marker.snr_lo_db = m.at("snr_db").at(0).get<double>();
      s.marker.snr_hi_db = m.at("snr_db").at(1).get<double>();
    }
  }
  s.rule = parse_label_rule(j.value("label_rule", std::string("xor")));
  s.symptom = j.value("symptom", s.symptom);
  s.label_noise = j.value("label_noise", 0.0);
  s.marker_rate = j.value("marker_rate", 0.5);
  s.symptom_rate = j.value("symptom_rate", 0.5);
  s.validate();
  return s;
}

const SourceSpec& CohortManifest::source(const std::string& id) const {
  for (const SourceSpec& s : sources)
    if (s.source_id == id) return s;
  throw ConfigError("manifest: unknown source '" + id + "'");
}

// ---- audio ------------------------------------------------------------------

namespace {

constexpr double kBaseRms = 0.05;

void one_pole_lowpass(std::vector<double>& x, double a) {
  double y = 0.0;
  for (double& v : x) {
    y = a * y + (1.0 - a) * v;
    v = y;
  }
}

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> base_signal(Timbre timbre, Rng& rng) {
  const std::size_t n = audio::kClipSamples;
  const double fs = audio::kSampleRate;
  std::vector<double> noise(n);
  for (double& v : noise) v = rng.normal();
  std::vector<double> out(n, 0.0);
  switch (timbre) {
    case Timbre::Breath: {
      one_pole_lowpass(noise, 0.85);
      const double rate = rng.uniform(0.2, 0.35);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        out[i] = noise[i] * (0.55 + 0.45 * std::sin(2.0 * M_PI * rate * t + phase));
      }
      break;
    }
    case Timbre::Cough: {
      std::vector<double> floor_noise = noise;
      one_pole_lowpass(floor_noise, 0.9);
      std::vector<double> sharp(n);
      for (std::size_t i = 0; i < n; ++i) sharp[i] = noise[i] - (i > 0 ? noise[i - 1] : 0.0);
      for (std::size_t i = 0; i < n; ++i) out[i] = 0.2 * floor_noise[i];
      const int events = 3 + static_cast<int>(rng.below(4));
      for (int e = 0; e < events; ++e) {
        const double dur = rng.uniform(0.25, 0.4);
        const auto start = static_cast<std::size_t>(rng.uniform(0.0, 8.0 - dur) * fs);
        const auto len = static_cast<std::size_t>(dur * fs);
        for (std::size_t k = 0; k < len && start + k < n; ++k) {
          const double t = static_cast<double>(k) / fs;
          out[start + k] += 1.5 * sharp[start + k] * std::exp(-t / 0.08);
        }
      }
      break;
    }
    case Timbre::Lung: {
      one_pole_lowpass(noise, 0.95);
      out = noise;
      const double level = rms(out);
      const int crackles = 10 + static_cast<int>(rng.below(21));
      for (int c = 0; c < crackles; ++c) {
        const auto start = static_cast<std::size_t>(rng.uniform(0.0, 7.95) * fs);
        const double f = rng.uniform(200.0, 600.0);
        for (std::size_t k = 0; k < 160 && start + k < n; ++k) {
          const double t = static_cast<double>(k) / fs;
          out[start + k] += 4.0 * level * std::exp(-t / 0.003) * std::sin(2.0 * M_PI * f * t);
        }
      }
      break;
    }
  }
  const double r = rms(out);
  if (r > 0.0)
    for (double& v : out) v *= kBaseRms / r;
  return out;
}

}  // namespace

audio::Waveform gen_waveform(bool marker_present, const SourceSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x = base_signal(spec.timbre, rng);
  Rng marker_rng(derive_seed(seed, "marker"));
  if (marker_present) {
    const double fs = audio::kSampleRate;
    const double snr = marker_rng.uniform(spec.marker.snr_lo_db, spec.marker.snr_hi_db);
    // Hann-windowed sine: RMS = amp * sqrt(3/16).
    const double amp = kBaseRms * std::pow(10.0, snr / 20.0) * std::sqrt(16.0 / 3.0);
    const auto len = static_cast<std::size_t>(spec.marker.burst_seconds * fs);
    for (int b = 0; b < spec.marker.bursts; ++b) {
      const double f = marker_rng.uniform(spec.marker.band_lo_hz, spec.marker.band_hi_hz);
      const auto start = static_cast<std::size_t>(
          marker_rng.uniform(0.0, 8.0 - spec.marker.burst_seconds) * fs);
      const double phase = marker_rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t k = 0; k < len && start + k < x.size(); ++k) {
        const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(k) /
                                                 static_cast<double>(len));
        x[start + k] += amp * env * std::sin(2.0 * M_PI * f * static_cast<double>(k) / fs + phase);
      }
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.99)
    for (double& v : x) v *= 0.99 / peak;
  audio::Waveform w{std::move(x), audio::kSampleRate};
  audio::quantize_pcm16(w);
  return w;
}

audio::Waveform row_waveform(const CohortRow& row, const SourceSpec& spec) {
  return gen_waveform(row.marker, spec, row.audio_seed);
}

// ---- cohort -----------------------------------------------------------------

namespace {

const std::vector<std::string> kMedicalHistory{"asthma", "copd", "diabetes", "heart disease",
                                               "hypertension"};
const std::vector<std::string> kSymptoms{"cough",      "fatigue",     "fever",
                                         "headache",   "loss of smell", "shortness of breath",
                                         "sore throat", "wheezing"};
const std::vector<std::string> kLocations{"anterior left", "anterior right", "posterior left",
                                          "posterior right", "trachea"};

text::DmsRecord sample_dms(const SourceSpec& spec, bool symptom, Rng& rng) {
  text::DmsRecord r;
  if (spec.fields.gender) r.gender = rng.bernoulli(0.5) ? "male" : "female";
  if (spec.fields.age) r.age = 18 + static_cast<int>(rng.below(63));
  if (spec.fields.medical_history) {
    std::vector<std::string> med;
    for (const std::string& m : kMedicalHistory)
      if (rng.bernoulli(0.15)) med.push_back(m);
    if (!med.empty()) r.medical_history = std::move(med);
  }
  if (spec.fields.symptoms) {
    std::vector<std::string> sym;
    for (const std::string& s : kSymptoms) {
      if (s == spec.symptom) {
        if (symptom) sym.push_back(s);
      } else if (rng.bernoulli(0.2)) {
        sym.push_back(s);
      }
    }
    if (symptom && std::find(sym.begin(), sym.end(), spec.symptom) == sym.end())
      sym.push_back(spec.symptom);
    if (!sym.empty()) r.symptoms = std::move(sym);
  }
  if (spec.fields.location) r.location = kLocations[rng.below(kLocations.size())];
  return r;
}

// Exact (marker, symptom) cell counts for n samples, then a seeded shuffle.
std::vector<std::pair<bool, bool>> stratified_factors(int n, double pm, double ps, Rng& rng) {
  const double dn = n;
  const auto c11 = static_cast<int>(std::lround(dn * pm * ps));
  const auto c10 = static_cast<int>(std::lround(dn * pm * (1.0 - ps)));
  const auto c01 = static_cast<int>(std::lround(dn * (1.0 - pm) * ps));
  std::vector<std::pair<bool, bool>> cells;
  cells.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (i < c11) cells.emplace_back(true, true);
    else if (i < c11 + c10) cells.emplace_back(true, false);
    else if (i < c11 + c10 + c01) cells.emplace_back(false, true);
    else cells.emplace_back(false, false);
  }
  rng.shuffle(cells.begin(), cells.end());
  return cells;
}

std::string sample_name(const std::string& source, const std::string& split, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return source + "-" + split + "-" + buf;
}

}  // namespace

CohortManifest gen_cohort(std::span<const SourceSpec> specs, std::uint64_t seed,
                          const std::optional<fs::path>& out_dir) {
  CohortManifest m;
  m.seed = seed;
  m.sources.assign(specs.begin(), specs.end());
  for (const SourceSpec& spec : specs) {
    spec.validate();
    for (const char* split : {"train", "test"}) {
      const int n = std::string(split) == "train" ? spec.n_train : spec.n_test;
      Rng strat(derive_seed(seed, spec.source_id + "/" + split + "/factors"));
      const auto cells = stratified_factors(n, spec.marker_rate, spec.symptom_rate, strat);
      for (int i = 0; i < n; ++i) {
        CohortRow row;
        row.sample_id = sample_name(spec.source_id, split, i);
        row.source_id = spec.source_id;
        row.split = split;
        row.wav_path = "wav/" + row.sample_id + ".wav";
        row.marker = cells[static_cast<std::size_t>(i)].first;
        row.symptom = cells[static_cast<std::size_t>(i)].second;
        Rng dms_rng(derive_seed(seed, row.sample_id + "/dms"));
        row.dms = sample_dms(spec, row.symptom, dms_rng);
        Rng noise_rng(derive_seed(seed, row.sample_id + "/label"));
        const bool clean = apply_rule(spec.rule, row.marker, row.symptom);
        row.label = (noise_rng.bernoulli(spec.label_noise) ? !clean : clean) ? 1 : 0;
        row.audio_seed = derive_seed(seed, row.sample_id + "/audio");
        m.rows.push_back(std::move(row));
      }
    }
  }
  if (out_dir) {
    fs::create_directories(*out_dir / "wav");
    for (const CohortRow& row : m.rows)
      audio::write_wav(*out_dir / row.wav_path, row_waveform(row, m.source(row.source_id)));
    write_manifest(*out_dir, m);
  }
  return m;
}

// ---- serialization ----------------------------------------------------------

nlohmann::json dms_to_json(const text::DmsRecord& r) {
  nlohmann::json j = nlohmann::json::object();
  if (r.gender) j["gender"] = *r.gender;
  if (r.age) j["age"] = *r.age;
  if (r.medical_history) j["medical_history"] = *r.medical_history;
  if (r.symptoms) j["symptoms"] = *r.symptoms;
  if (r.location) j["location"] = *r.location;
  return j;
}

text::DmsRecord dms_from_json(const nlohmann::json& j) {
  text::DmsRecord r;
  if (j.contains("gender") && !j["gender"].is_null()) r.gender = j["gender"].get<std::string>();
  if (j.contains("age") && !j["age"].is_null()) r.age = j["age"].get<int>();
  if (j.contains("medical_history") && !j["medical_history"].is_null())
    r.medical_history = j["medical_history"].get<std::vector<std::string>>();
  if (j.contains("symptoms") && !j["symptoms"].is_null())
    r.symptoms = j["symptoms"].get<std::vector<std::string>>();
  if (j.contains("location") && !j["location"].is_null())
    r.location = j["location"].get<std::string>();
  return r;
}

nlohmann::json row_to_json(const CohortRow& row) {
  nlohmann::json j = dms_to_json(row.dms);
  j["sample_id"] = row.sample_id;
  j["source_id"] = row.source_id;
  j["wav_path"] = row.wav_path;
  j["label"] = row.label;
  j["split"] = row.split;
  j["marker"] = row.marker;
  j["symptom_flag"] = row.symptom;
  j["audio_seed"] = row.audio_seed;
  return j;
}

CohortRow row_from_json(const nlohmann::json& j) {
  CohortRow row;
  row.sample_id = j.at("sample_id").get<std::string>();
  row.source_id = j.at("source_id").get<std::string>();
  row.wav_path = j.at("wav_path").get<std::string>();
  row.dms = dms_from_json(j);
  row.label = j.at("label").get<int>();
  row.split = j.at("split").get<std::string>();
  row.marker = j.value("marker", false);
  row.symptom = j.value("symptom_flag", false);
  row.audio_seed = j.value("audio_seed", std::uint64_t{0});
  return row;
}

void write_manifest(const fs::path& dir, const CohortManifest& m) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.jsonl", std::ios::binary);
    if (!out) throw InputError("write_manifest: cannot write " + (dir / "manifest.jsonl").string());
    for (const CohortRow& row : m.rows) out << row_to_json(row).dump() << "\n";
  }
  CohortSpecFile spec{m.seed, m.sources};
  save_spec_file(dir / "sources.json", spec);
}

CohortManifest read_manifest(const fs::path& dir) {
  CohortManifest m;
  const CohortSpecFile spec = load_spec_file(dir / "sources.json");
  m.seed = spec.seed;
  m.sources = spec.sources;
  std::ifstream in(dir / "manifest.jsonl", std::ios::binary);
  if (!in) throw InputError("read_manifest: cannot read " + (dir / "manifest.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.rows.push_back(row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("read_manifest: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

CohortSpecFile load_spec_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("spec file: cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("spec file " + path.string() + ": " + e.what());
  }
  CohortSpecFile spec;
  spec.seed = j.value("seed", std::uint64_t{0});
  for (const auto& s : j.at("sources")) spec.sources.push_back(SourceSpec::from_json(s));
  return spec;
}

void save_spec_file(const fs::path& path, const CohortSpecFile& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["sources"] = nlohmann::json::array();
  for (const SourceSpec& s : spec.sources) j["sources"].push_back(s.to_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("spec file: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---- source library ---------------------------------------------------------

std::vector<SourceSpec> xor_fusion_sources(int n_train, int n_test, double label_noise) {
  std::vector<SourceSpec> out(3);
  out[0].source_id = "S1";
  out[0].task = {"Synthetic Cough Study", "cough", "COVID-19", "positive", "negative"};
  out[0].timbre = Timbre::Cough;
  out[0].marker.band_lo_hz = 700.0;
  out[0].marker.band_hi_hz = 900.0;

  out[1].source_id = "S2";
  out[1].task = {"Synthetic Breathing Collection", "breath", "COVID-19", "positive", "negative"};
  out[1].timbre = Timbre::Breath;
  out[1].marker.band_lo_hz = 1800.0;
  out[1].marker.band_hi_hz = 2200.0;

  out[2].source_id = "S3";
  out[2].task = {"Synthetic Auscultation Database", "lung", "COPD", "COPD", "healthy"};
  out[2].timbre = Timbre::Lung;
  out[2].fields.location = true;
  out[2].marker.band_lo_hz = 3800.0;
  out[2].marker.band_hi_hz = 4400.0;

  for (SourceSpec& s : out) {
    s.n_train = n_train;
    s.n_test = n_test;
    s.rule = LabelRule::Xor;
    s.symptom = "fever";
    s.label_noise = label_noise;
  }
  return out;
}

SourceSpec zero_shot_target(int n_test, double label_noise) {
  SourceSpec t;
  t.source_id = "T1";
  t.task = {"Synthetic Community Screening Program", "deep breathing", "bronchitis", "bronchitis",
            "no bronchitis"};
  t.timbre = Timbre::Breath;
  t.n_train = 0;
  t.n_test = n_test;
  t.marker.band_lo_hz = 2700.0;
  t.marker.band_hi_hz = 3100.0;
  t.rule = LabelRule::Xor;
  t.symptom = "fever";
  t.label_noise = label_noise;
  return t;
}

std::vector<SourceSpec> encoder_pretraining_sources(int n_per_source) {
  std::vector<SourceSpec> out;
  const Timbre timbres[] = {Timbre::Cough, Timbre::Breath, Timbre::Lung};
  constexpr int kBands = 12;
  for (int b = 0; b < kBands; ++b) {
    const double center = 400.0 * std::pow(6400.0 / 400.0, b / (kBands - 1.0));
    SourceSpec s;
    s.source_id = "P" + std::to_string(b);
    s.task = {"Synthetic Pretraining Corpus", "mixed", "marker", "present", "absent"};
    s.timbre = timbres[b % 3];
    s.n_train = n_per_source;
    s.n_test = 0;
    s.fields = DmsFields{false, false, false, false, false};
    s.marker.band_lo_hz = center * 0.9;
    s.marker.band_hi_hz = center * 1.1;
    s.rule = LabelRule::Or;
    s.symptom_rate = 0.0;
    s.symptom.clear();
    out.push_back(s);
  }
  return out;
}

}  // namespace respllm::data
