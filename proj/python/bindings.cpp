#include "respllm/audio/frontend.hpp"
#include "respllm/train/experiment.hpp"
#include "respllm/train/gradsuite.hpp"
#include "respllm/train/metrics.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace respllm;
using namespace respllm::train;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto v = out.mutable_unchecked<2>();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
  return out;
}

py::array_t<double> log_mel_py(py::array_t<double, py::array::c_style | py::array::forcecast> x,
                               int sample_rate) {
  if (x.ndim() != 1) throw DimensionError("log_mel: expected a 1-D waveform");
  audio::Waveform w;
  w.samples.assign(x.data(), x.data() + x.size());
  w.sample_rate = sample_rate;
  return to_numpy(audio::log_mel(audio::standardize(w)).values);
}

std::size_t synth_py(const fs::path& out, const std::optional<fs::path>& spec,
                     const std::optional<std::string>& preset, int n_train, int n_test,
                     double noise, std::uint64_t seed) {
  data::CohortSpecFile s;
  if (spec && preset) throw ConfigError("synth: give either spec or preset");
  if (spec) {
    s = data::load_spec_file(*spec);
  } else if (preset == "xor-fusion") {
    s.seed = seed;
    s.sources = data::xor_fusion_sources(n_train, n_test, noise);
    s.sources.push_back(data::zero_shot_target(n_test, noise));
  } else if (preset == "pretrain") {
    s.seed = seed;
    s.sources = data::encoder_pretraining_sources(n_train);
  } else {
    throw ConfigError("synth: need spec or preset xor-fusion|pretrain");
  }
  return data::gen_cohort(s.sources, s.seed, out).rows.size();
}

std::size_t prepare_py(const fs::path& manifest_dir, const fs::path& out) {
  const data::CohortManifest m = data::read_manifest(manifest_dir);
  const auto records = build_instruction_dataset(m, task_specs(m));
  save_records(out, records);
  return records.size();
}

py::list load_records_py(const fs::path& path) {
  py::list out;
  for (const InstructionRecord& r : load_records(path)) out.append(to_py(record_to_json(r)));
  return out;
}

double pretrain_py(const fs::path& config, const fs::path& out, int threads) {
  const ExperimentConfig cfg = ExperimentConfig::load(config);
  PretrainResult r;
  {
    py::gil_scoped_release nogil;
    r = pretrain_encoder(cfg.pretrain, threads);
  }
  save_checkpoint(out, *r.model, r.vocab, r.state);
  return r.held_out_auroc;
}

py::dict train_py(const std::string& kind, const fs::path& config, const fs::path& records,
                  const fs::path& audio_root, const fs::path& out, std::uint64_t seed,
                  const std::optional<fs::path>& encoder, const std::vector<std::string>& hold_out,
                  int threads) {
  TrainJob job;
  job.kind = kind;
  job.config = ExperimentConfig::load(config);
  job.seed = seed;
  job.records = load_records(records);
  job.loader = wav_loader(audio_root);
  job.encoder = encoder;
  job.held_out = hold_out;
  job.out = out;
  job.threads = threads;
  TrainJobResult r;
  {
    py::gil_scoped_release nogil;
    r = run_train_job(job);
  }
  std::vector<double> losses;
  for (const LossPoint& p : r.curve) losses.push_back(p.loss);
  py::dict d;
  d["steps"] = r.state.step;
  d["losses"] = losses;
  d["trained_tasks"] = r.state.trained_tasks;
  d["test"] = r.test ? to_py(r.test->to_json()) : py::none();
  return d;
}

py::object evaluate_py(const fs::path& checkpoint, const fs::path& records,
                       const fs::path& audio_root, const std::string& split,
                       const std::vector<std::string>& tasks, bool zero, int threads) {
  std::vector<InstructionRecord> rows;
  for (InstructionRecord& r : load_records(records))
    if ((split == "all" || r.split == split) &&
        (tasks.empty() || std::find(tasks.begin(), tasks.end(), r.task_id) != tasks.end()))
      rows.push_back(std::move(r));
  if (rows.empty()) throw InputError("evaluate: no records match the split and task filter");
  EvalReport rep;
  {
    py::gil_scoped_release nogil;
    rep = evaluate_checkpoint(checkpoint, rows, wav_loader(audio_root), zero, threads);
  }
  return to_py(rep.to_json());
}

py::list gradcheck_py(int coordinates, double step, double tolerance, std::uint64_t seed) {
  GradCheckOptions o;
  o.coordinates = coordinates;
  o.step = step;
  o.tolerance = tolerance;
  o.seed = seed;
  std::vector<GradCheckResult> results;
  {
    py::gil_scoped_release nogil;
    results = run_gradient_suite(o);
  }
  py::list out;
  for (const GradCheckResult& r : results) {
    py::dict d;
    d["name"] = r.name;
    d["coordinates"] = r.coordinates;
    d["max_relative_error"] = r.max_relative_error;
    d["passed"] = r.passed;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "respllm: synthetic cohorts, training and evaluation";
  static py::exception<ContractViolation> contract(m, "ContractViolation", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ContractViolation& e) {
      py::set_error(contract, e.what());
    }
  });

  m.attr("MODEL_KINDS") = std::vector<std::string>(std::begin(kModelKinds), std::end(kModelKinds));

  m.def("log_mel", &log_mel_py, py::arg("samples"), py::arg("sample_rate") = audio::kSampleRate,
        "Standardize a waveform and return its [frames x 64] log-mel spectrogram.");
  m.def("auroc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          return auroc(scores, labels);
        },
        py::arg("scores"), py::arg("labels"));
  m.def("synth", &synth_py, py::arg("out_dir"), py::arg("spec") = py::none(),
        py::arg("preset") = py::none(), py::arg("n_train") = 1500, py::arg("n_test") = 500,
        py::arg("noise") = 0.0, py::arg("seed") = 11,
        "Write a cohort (manifest + WAVs) from a spec file or a preset; returns the clip count.");
  m.def("prepare", &prepare_py, py::arg("manifest_dir"), py::arg("out"),
        "Write instruction records JSONL for a cohort; returns the record count.");
  m.def("load_records", &load_records_py, py::arg("path"));
  m.def("pretrain", &pretrain_py, py::arg("config"), py::arg("out"), py::arg("threads") = 1,
        "Pretrain the audio encoder; returns its held-out AUROC.");
  m.def("train", &train_py, py::arg("kind"), py::arg("config"), py::arg("records"),
        py::arg("audio_root"), py::arg("out"), py::arg("seed") = 1,
        py::arg("encoder") = py::none(), py::arg("hold_out") = std::vector<std::string>{},
        py::arg("threads") = 1);
  m.def("evaluate", &evaluate_py, py::arg("checkpoint"), py::arg("records"),
        py::arg("audio_root"), py::arg("split") = "test",
        py::arg("tasks") = std::vector<std::string>{}, py::arg("zero_shot") = false,
        py::arg("threads") = 1, "EvalReport of a checkpoint as a dict.");
  m.def("gradcheck", &gradcheck_py, py::arg("coordinates") = 50, py::arg("step") = 1e-5,
        py::arg("tolerance") = 1e-3, py::arg("seed") = 0);
}
