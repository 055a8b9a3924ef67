#pragma once

#include "respllm/baselines/baselines.hpp"
#include "respllm/data/synth.hpp"
#include "respllm/train/checkpoint.hpp"
#include "respllm/train/evaluate.hpp"
#include "respllm/train/instructions.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace respllm::train {

// Audio-only marker detection over encoder_pretraining_sources with the
// encoder unfrozen. The resulting encoder is copied into models that freeze it.
struct PretrainConfig {
  int n_per_source = 200;
  int n_test_per_source = 25;
  std::uint64_t data_seed = 7;
  std::uint64_t seed = 1;
  audio::AudioEncoderConfig encoder;
  TrainConfig train = default_train();

  static TrainConfig default_train() {
    TrainConfig t;
    t.epochs = 16;
    t.optim.lr = 3e-3;
    return t;
  }
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainResult {
  std::unique_ptr<baselines::AudioOnlyClassifier> model;
  text::Vocabulary vocab;
  TrainState state;
  double held_out_auroc = 0.0;
};

PretrainResult pretrain_encoder(const PretrainConfig& cfg, int threads = 1);

// Loads `cache` when it exists, otherwise pretrains and saves it there.
std::unique_ptr<Classifier> pretrained_encoder_model(const PretrainConfig& cfg,
                                                     const std::optional<std::filesystem::path>& cache,
                                                     int threads = 1);

// Examples split into the training sources' train and test rows and the
// rows of held-out tasks. The vocabulary and DMS schema come from the
// training rows only.
struct PreparedData {
  data::CohortManifest manifest;
  std::vector<InstructionRecord> records;
  text::Vocabulary vocab;
  baselines::DmsSchema schema;
  std::vector<Example> train;
  std::vector<Example> test;
  std::vector<Example> held_out;
  // hash_parameters of the encoder that filled Example::encoded; 0 if none.
  std::uint64_t encoder_hash = 0;
};

struct PrepareOptions {
  std::vector<std::string> held_out_tasks;
  std::size_t vocab_max = 2000;
  // Precompute z_a with this model's encoder.
  const Classifier* encoder_model = nullptr;
  bool keep_patches = true;
  int threads = 1;
};

PreparedData prepare_data(const data::CohortManifest& manifest, const AudioLoader& loader,
                          const PrepareOptions& opts);
// Same split and fitting rules over already-built records; the manifest stays empty.
PreparedData prepare_records(std::vector<InstructionRecord> records, const AudioLoader& loader,
                             const PrepareOptions& opts);

std::uint64_t encoder_hash(const Classifier& model);

struct RunResult {
  std::unique_ptr<Classifier> model;
  TrainState state;
  std::vector<LossPoint> curve;
  EvalReport test;
  std::optional<EvalReport> held_out;  // zero-shot report when held-out rows exist
  double seconds = 0.0;
};

// Everything the train subcommand and the experiments read from one JSON file:
// {"model": ModelOptions, "train": TrainConfig, "pretrain": PretrainConfig,
//  "vocab_max": N}. The pretraining encoder defaults to the model's.
struct ExperimentConfig {
  ModelOptions model;
  TrainConfig train;
  PretrainConfig pretrain;
  std::size_t vocab_max = 2000;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Builds `kind`, copies the pretrained encoder into it when given, trains on
// data.train and evaluates. Throws ContractViolation if cached encodings were
// produced by a different encoder than the one a frozen-encoder model holds.
RunResult run_model(const std::string& kind, const ModelOptions& opts, const TrainConfig& tcfg,
                    const PreparedData& data, const Classifier* pretrained, std::uint64_t seed,
                    std::ostream* log = nullptr);

// Examples for an existing model: its DMS schema (empty for kinds without
// one) and, for a frozen encoder, cached encodings without patches.
std::vector<Example> examples_for_model(const Classifier& model, const text::Vocabulary& vocab,
                                        std::span<const InstructionRecord> records,
                                        const AudioLoader& loader, int threads = 1);

// One training run over instruction records, as driven by the CLI and the
// Python module. Rows of held_out tasks are dropped; the vocabulary and
// schema are fitted on the remaining train rows unless resuming.
struct TrainJob {
  std::string kind;
  ExperimentConfig config;
  std::uint64_t seed = 1;
  std::vector<InstructionRecord> records;
  AudioLoader loader;
  std::optional<std::filesystem::path> encoder;  // checkpoint whose encoder is copied in
  std::optional<std::filesystem::path> resume;
  std::vector<std::string> held_out;
  std::filesystem::path out;  // checkpoint, rewritten every checkpoint_every steps
  int threads = 1;
  std::ostream* log = nullptr;
};

struct TrainJobResult {
  std::vector<LossPoint> curve;
  TrainState state;
  std::optional<EvalReport> test;  // on the test rows, when there are any
};

TrainJobResult run_train_job(const TrainJob& job);

// evaluate() or zero_shot() of a saved checkpoint on `records`.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               std::span<const InstructionRecord> records,
                               const AudioLoader& loader, bool zero_shot_run, int threads = 1);

}  // namespace respllm::train
