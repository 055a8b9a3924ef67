// respllm command-line driver. Exit codes: 0 ok, 1 runtime failure,
// 2 bad input or configuration, 3 contract violation, 4 failed check.
#include "respllm/train/experiment.hpp"
#include "respllm/train/gradsuite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace respllm;
using namespace respllm::train;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitContract = 3;
constexpr int kExitCheck = 4;

int default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<InstructionRecord> select(std::vector<InstructionRecord> records,
                                      const std::string& split,
                                      const std::vector<std::string>& tasks) {
  std::vector<InstructionRecord> out;
  for (InstructionRecord& r : records)
    if ((split == "all" || r.split == split) && (tasks.empty() || contains(tasks, r.task_id)))
      out.push_back(std::move(r));
  if (out.empty()) throw InputError("no records match split '" + split + "' and the task filter");
  return out;
}

void print_report(const EvalReport& report, const std::optional<fs::path>& out) {
  std::cout << report.table();
  if (out) write_json(*out, report.to_json());
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::optional<fs::path> spec;
  std::string preset;
  int n_train = 1500;
  int n_test = 500;
  double noise = 0.0;
  std::uint64_t seed = 11;
  std::optional<fs::path> write_spec;
  fs::path out;
};

data::CohortSpecFile preset_spec(const SynthArgs& a) {
  data::CohortSpecFile s;
  s.seed = a.seed;
  if (a.preset == "xor-fusion") {
    s.sources = data::xor_fusion_sources(a.n_train, a.n_test, a.noise);
    s.sources.push_back(data::zero_shot_target(a.n_test, a.noise));
  } else if (a.preset == "pretrain") {
    s.sources = data::encoder_pretraining_sources(a.n_train);
  } else {
    throw ConfigError("unknown preset '" + a.preset + "' (xor-fusion|pretrain)");
  }
  return s;
}

int run_synth(const SynthArgs& a) {
  const data::CohortSpecFile spec = a.spec ? data::load_spec_file(*a.spec) : preset_spec(a);
  if (a.write_spec) data::save_spec_file(*a.write_spec, spec);
  const data::CohortManifest m = data::gen_cohort(spec.sources, spec.seed, a.out);
  std::cout << "wrote " << m.rows.size() << " clips to " << a.out.string() << '\n';
  return 0;
}

// ---- prepare -------------------------------------------------------------

int run_prepare(const fs::path& manifest_dir, const fs::path& out) {
  const data::CohortManifest m = data::read_manifest(manifest_dir);
  const auto records = build_instruction_dataset(m, task_specs(m));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_records(out, records);
  std::cout << "wrote " << records.size() << " records to " << out.string() << '\n';
  return 0;
}

// ---- pretrain ------------------------------------------------------------

int run_pretrain(const fs::path& config, const fs::path& out, int threads) {
  const ExperimentConfig cfg = ExperimentConfig::load(config);
  PretrainResult r = pretrain_encoder(cfg.pretrain, threads);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out, *r.model, r.vocab, r.state);
  std::cout << "encoder held-out AUROC " << r.held_out_auroc << ", saved " << out.string() << '\n';
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string model;
  fs::path config;
  std::uint64_t seed = 1;
  fs::path out;
  fs::path records;
  fs::path audio_root;
  std::optional<fs::path> encoder;
  std::optional<fs::path> resume;
  std::optional<fs::path> loss_csv;
  std::optional<fs::path> report;
  std::vector<std::string> held_out;
  int checkpoint_every = 0;
  int threads = 1;
};

int run_train(const TrainArgs& a) {
  TrainJob job;
  job.kind = a.model;
  job.config = ExperimentConfig::load(a.config);
  if (job.config.train.log_every <= 0) job.config.train.log_every = 50;
  if (a.checkpoint_every > 0) job.config.train.checkpoint_every = a.checkpoint_every;
  job.seed = a.seed;
  job.records = load_records(a.records);
  job.loader = wav_loader(a.audio_root);
  job.encoder = a.encoder;
  job.resume = a.resume;
  job.held_out = a.held_out;
  job.out = a.out;
  job.threads = a.threads;
  job.log = &std::cerr;
  if (!a.encoder && !a.resume && a.model != "dms-hard" && a.model != "dms-soft")
    std::cerr << "note: no --encoder given, the audio encoder starts from random weights\n";

  const TrainJobResult r = run_train_job(job);
  if (a.loss_csv) write_loss_csv(*a.loss_csv, r.curve);
  std::cout << "trained " << a.model << " for " << r.state.step << " steps, saved "
            << a.out.string() << '\n';
  if (r.test) print_report(*r.test, a.report);
  return 0;
}

// ---- eval / zeroshot -----------------------------------------------------

struct EvalArgs {
  fs::path checkpoint;
  fs::path records;
  fs::path audio_root;
  std::string split = "test";
  std::vector<std::string> tasks;
  std::optional<fs::path> out;
  int threads = 1;
};

int run_eval(const EvalArgs& a, bool zero) {
  const auto records = select(load_records(a.records), a.split, a.tasks);
  print_report(evaluate_checkpoint(a.checkpoint, records, wav_loader(a.audio_root), zero, a.threads),
               a.out);
  return 0;
}

// ---- gradcheck -----------------------------------------------------------

int run_gradcheck(const GradCheckOptions& opts, const std::optional<fs::path>& out) {
  const auto results = run_gradient_suite(opts);
  nlohmann::json j = nlohmann::json::array();
  int failed = 0;
  for (const GradCheckResult& r : results) {
    std::printf("%-4s %-40s coords %3d  max rel err %.3e\n", r.passed ? "ok" : "FAIL",
                r.name.c_str(), r.coordinates, r.max_relative_error);
    failed += r.passed ? 0 : 1;
    j.push_back({{"name", r.name},
                 {"coordinates", r.coordinates},
                 {"max_relative_error", r.max_relative_error},
                 {"passed", r.passed}});
  }
  if (out) write_json(*out, j);
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Respiratory audio + metadata classifiers"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  auto* o_spec = c_synth->add_option("--spec", synth.spec, "Cohort spec JSON")->check(CLI::ExistingFile);
  auto* o_preset = c_synth->add_option("--preset", synth.preset, "xor-fusion|pretrain");
  o_spec->excludes(o_preset);
  c_synth->add_option("--n-train", synth.n_train, "Preset: train clips per source");
  c_synth->add_option("--n-test", synth.n_test, "Preset: test clips per source");
  c_synth->add_option("--noise", synth.noise, "Preset: label noise rate");
  c_synth->add_option("--seed", synth.seed, "Preset: cohort seed");
  c_synth->add_option("--write-spec", synth.write_spec, "Also save the cohort spec file used");
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  fs::path prep_manifest, prep_out;
  auto* c_prep = app.add_subcommand("prepare", "Turn a cohort manifest into instruction records");
  c_prep->add_option("--manifest", prep_manifest, "Cohort directory")->required()->check(CLI::ExistingDirectory);
  c_prep->add_option("--out", prep_out, "Records JSONL")->required();

  fs::path pre_config, pre_out;
  int pre_threads = default_threads();
  auto* c_pre = app.add_subcommand("pretrain", "Pretrain the audio encoder");
  c_pre->add_option("--config", pre_config, "Experiment config")->required()->check(CLI::ExistingFile);
  c_pre->add_option("--out", pre_out, "Encoder checkpoint")->required();
  c_pre->add_option("--threads", pre_threads);

  TrainArgs tr;
  tr.threads = default_threads();
  std::vector<std::string> kinds(std::begin(kModelKinds), std::end(kModelKinds));
  auto* c_train = app.add_subcommand("train", "Train one model");
  c_train->add_option("--model", tr.model)->required()->check(CLI::IsMember(kinds));
  c_train->add_option("--config", tr.config, "Experiment config")->required()->check(CLI::ExistingFile);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--records", tr.records, "Records JSONL")->required()->check(CLI::ExistingFile);
  c_train->add_option("--audio-root", tr.audio_root, "Directory WAV paths resolve against")
      ->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--encoder", tr.encoder, "Pretrained encoder checkpoint")->check(CLI::ExistingFile);
  c_train->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  c_train->add_option("--loss-csv", tr.loss_csv);
  c_train->add_option("--report", tr.report, "Test EvalReport JSON");
  c_train->add_option("--hold-out", tr.held_out, "Tasks excluded from training")->delimiter(',');
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Steps between checkpoints");
  c_train->add_option("--threads", tr.threads);

  EvalArgs ev, zs;
  ev.threads = zs.threads = default_threads();
  const auto eval_opts = [](CLI::App* c, EvalArgs& a) {
    c->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
    c->add_option("--records", a.records)->required()->check(CLI::ExistingFile);
    c->add_option("--audio-root", a.audio_root)->required()->check(CLI::ExistingDirectory);
    c->add_option("--split", a.split, "train|test|all");
    c->add_option("--out", a.out, "EvalReport JSON");
    c->add_option("--threads", a.threads);
  };
  auto* c_eval = app.add_subcommand("eval", "Per-task AUROC");
  eval_opts(c_eval, ev);
  c_eval->add_option("--tasks", ev.tasks)->delimiter(',');
  auto* c_zs = app.add_subcommand("zeroshot", "AUROC on tasks the checkpoint never trained on");
  eval_opts(c_zs, zs);
  c_zs->add_option("--tasks", zs.tasks)->delimiter(',')->required();

  GradCheckOptions gc;
  std::optional<fs::path> gc_out;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  c_gc->add_option("--coordinates", gc.coordinates);
  c_gc->add_option("--step", gc.step);
  c_gc->add_option("--tolerance", gc.tolerance);
  c_gc->add_option("--out", gc_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_synth) {
      if (!synth.spec && synth.preset.empty()) throw ConfigError("synth needs --spec or --preset");
      return run_synth(synth);
    }
    if (*c_prep) return run_prepare(prep_manifest, prep_out);
    if (*c_pre) return run_pretrain(pre_config, pre_out, pre_threads);
    if (*c_train) return run_train(tr);
    if (*c_eval) return run_eval(ev, false);
    if (*c_zs) return run_eval(zs, true);
    if (*c_gc) return run_gradcheck(gc, gc_out);
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::invalid_argument& e) {  // ConfigError, InputError, DimensionError
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
