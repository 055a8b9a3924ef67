#include "respllm/train/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

namespace respllm::train {

namespace fs = std::filesystem;

nlohmann::json PretrainConfig::to_json() const {
  return {{"n_per_source", n_per_source}, {"n_test_per_source", n_test_per_source},
          {"data_seed", data_seed},       {"seed", seed},
          {"encoder", encoder.to_json()}, {"train", train.to_json()}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.n_per_source = j.value("n_per_source", c.n_per_source);
  c.n_test_per_source = j.value("n_test_per_source", c.n_test_per_source);
  c.data_seed = j.value("data_seed", c.data_seed);
  c.seed = j.value("seed", c.seed);
  if (j.contains("encoder")) c.encoder = audio::AudioEncoderConfig::from_json(j.at("encoder"));
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (c.n_per_source < 1 || c.n_test_per_source < 1)
    throw ConfigError("pretrain: sample counts must be >= 1");
  return c;
}

PretrainResult pretrain_encoder(const PretrainConfig& cfg, int threads) {
  auto specs = data::encoder_pretraining_sources(cfg.n_per_source);
  for (data::SourceSpec& s : specs) s.n_test = cfg.n_test_per_source;
  const data::CohortManifest m = data::gen_cohort(specs, cfg.data_seed);
  const auto records = build_instruction_dataset(m, task_specs(m));

  PretrainResult out;
  out.vocab = text::Vocabulary::build(text_corpus(records), 100);
  const auto schema = baselines::DmsSchema::build(dms_records(records));
  ExampleOptions eo;
  eo.threads = threads;
  auto examples = make_examples(records, out.vocab, schema, synthetic_loader(m), eo);

  // One pooled detection task: the band varies per source, the question does not.
  std::vector<Example> train_ex, test_ex;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    examples[i].task_id = "pretrain";
    (records[i].split == "train" ? train_ex : test_ex).push_back(std::move(examples[i]));
  }
  out.model = std::make_unique<baselines::AudioOnlyClassifier>(cfg.encoder, cfg.seed, true);
  TrainConfig tcfg = cfg.train;
  tcfg.threads = threads;
  out.state.seed = cfg.seed;
  train(*out.model, train_ex, tcfg, out.state);
  out.held_out_auroc = evaluate(*out.model, test_ex, cfg.seed, threads).mean_auroc().value();
  return out;
}

std::unique_ptr<Classifier> pretrained_encoder_model(const PretrainConfig& cfg,
                                                     const std::optional<fs::path>& cache,
                                                     int threads) {
  if (cache && fs::exists(*cache)) {
    Checkpoint ck = load_checkpoint(*cache);
    if (ck.model->kind() != "audio" || ck.model->encoder()->config() != cfg.encoder)
      throw ConfigError("pretrained encoder cache " + cache->string() +
                        " does not match the configured encoder");
    return std::move(ck.model);
  }
  PretrainResult r = pretrain_encoder(cfg, threads);
  if (cache) {
    if (cache->has_parent_path()) fs::create_directories(cache->parent_path());
    save_checkpoint(*cache, *r.model, r.vocab, r.state);
  }
  return std::move(r.model);
}

std::uint64_t encoder_hash(const Classifier& model) {
  return hash_parameters(model.parameters(),
                         [](const Parameter& p) { return audio::AudioEncoder::owns(p.name); });
}

PreparedData prepare_data(const data::CohortManifest& manifest, const AudioLoader& loader,
                          const PrepareOptions& opts) {
  PreparedData d =
      prepare_records(build_instruction_dataset(manifest, task_specs(manifest)), loader, opts);
  d.manifest = manifest;
  return d;
}

PreparedData prepare_records(std::vector<InstructionRecord> records, const AudioLoader& loader,
                             const PrepareOptions& opts) {
  PreparedData d;
  d.records = std::move(records);
  const auto held_out = [&](const InstructionRecord& r) {
    return std::find(opts.held_out_tasks.begin(), opts.held_out_tasks.end(), r.task_id) !=
           opts.held_out_tasks.end();
  };
  std::vector<InstructionRecord> fit_rows;
  for (const InstructionRecord& r : d.records)
    if (r.split == "train" && !held_out(r)) fit_rows.push_back(r);
  d.vocab = text::Vocabulary::build(text_corpus(fit_rows), opts.vocab_max);
  d.schema = baselines::DmsSchema::build(dms_records(fit_rows));

  ExampleOptions eo;
  eo.threads = opts.threads;
  eo.keep_patches = opts.keep_patches || opts.encoder_model == nullptr;
  if (opts.encoder_model) {
    eo.encoder = opts.encoder_model->encoder();
    if (!eo.encoder) throw ConfigError("prepare_data: encoder model has no encoder");
    d.encoder_hash = encoder_hash(*opts.encoder_model);
  }
  auto examples = make_examples(d.records, d.vocab, d.schema, loader, eo);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const InstructionRecord& r = d.records[i];
    if (held_out(r)) d.held_out.push_back(std::move(examples[i]));
    else if (r.split == "train") d.train.push_back(std::move(examples[i]));
    else d.test.push_back(std::move(examples[i]));
  }
  return d;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"pretrain", pretrain.to_json()},
          {"vocab_max", vocab_max}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("model")) c.model = ModelOptions::from_json(j.at("model"));
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("pretrain")) c.pretrain = PretrainConfig::from_json(j.at("pretrain"));
  if (!j.contains("pretrain") || !j.at("pretrain").contains("encoder"))
    c.pretrain.encoder = c.model.respllm.encoder;
  c.vocab_max = j.value("vocab_max", c.vocab_max);
  if (c.vocab_max < 2) throw ConfigError("experiment: vocab_max must be >= 2");
  if (!(c.pretrain.encoder == c.model.respllm.encoder))
    throw ConfigError("experiment: pretrain.encoder differs from model.respllm.encoder");
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("experiment config: cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("experiment config " + path.string() + ": " + e.what());
  }
}

RunResult run_model(const std::string& kind, const ModelOptions& opts, const TrainConfig& tcfg,
                    const PreparedData& data, const Classifier* pretrained, std::uint64_t seed,
                    std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.model = make_model(kind, opts, data.schema, static_cast<int>(data.vocab.size()), seed);
  if (pretrained && r.model->encoder()) {
    audio::copy_encoder_weights(pretrained->parameters(), r.model->parameters());
  }
  if (r.model->encoder() && r.model->encoder_frozen() && data.encoder_hash != 0 &&
      encoder_hash(*r.model) != data.encoder_hash)
    throw ContractViolation("run_model: cached encodings come from a different encoder than " +
                            kind + " holds");
  if (r.model->encoder() && !r.model->encoder_frozen() && !data.train.empty() &&
      !data.train.front().patches)
    throw ContractViolation("run_model: " + kind + " fine-tunes its encoder and needs patches");

  r.state.seed = seed;
  r.curve = train(*r.model, data.train, tcfg, r.state, {}, log);
  r.test = evaluate(*r.model, data.test, seed, tcfg.threads);
  if (!data.held_out.empty()) r.held_out = zero_shot(*r.model, data.held_out, r.state, tcfg.threads);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<Example> examples_for_model(const Classifier& model, const text::Vocabulary& vocab,
                                        std::span<const InstructionRecord> records,
                                        const AudioLoader& loader, int threads) {
  const nlohmann::json cfg = model.config();
  const baselines::DmsSchema schema = cfg.contains("schema")
                                          ? baselines::DmsSchema::from_json(cfg.at("schema"))
                                          : baselines::DmsSchema{};
  ExampleOptions eo;
  eo.threads = threads;
  if (model.encoder() && model.encoder_frozen()) {
    eo.encoder = model.encoder();
    eo.keep_patches = false;
  }
  return make_examples(records, vocab, schema, loader, eo);
}

TrainJobResult run_train_job(const TrainJob& job) {
  TrainConfig tcfg = job.config.train;
  tcfg.threads = job.threads;
  std::vector<InstructionRecord> train_rows, test_rows;
  for (const InstructionRecord& r : job.records) {
    if (std::find(job.held_out.begin(), job.held_out.end(), r.task_id) != job.held_out.end())
      continue;
    (r.split == "train" ? train_rows : test_rows).push_back(r);
  }
  if (train_rows.empty()) throw InputError("train job: no training records");

  std::unique_ptr<Classifier> model;
  text::Vocabulary vocab;
  TrainJobResult res;
  if (job.resume) {
    Checkpoint ck = load_checkpoint(*job.resume);
    if (ck.model->kind() != job.kind)
      throw ConfigError("resume checkpoint holds a " + ck.model->kind() + " model, not " +
                        job.kind);
    model = std::move(ck.model);
    vocab = std::move(ck.vocab);
    res.state = std::move(ck.state);
  } else {
    vocab = text::Vocabulary::build(text_corpus(train_rows), job.config.vocab_max);
    const auto schema = baselines::DmsSchema::build(dms_records(train_rows));
    model = make_model(job.kind, job.config.model, schema, static_cast<int>(vocab.size()), job.seed);
    if (job.encoder && model->encoder()) {
      const Checkpoint enc = load_checkpoint(*job.encoder);
      if (!enc.model->encoder() || enc.model->encoder()->config() != model->encoder()->config())
        throw ConfigError("encoder checkpoint " + job.encoder->string() +
                          " does not match the configured encoder");
      audio::copy_encoder_weights(enc.model->parameters(), model->parameters());
    }
    res.state.seed = job.seed;
  }

  const auto examples = examples_for_model(*model, vocab, train_rows, job.loader, job.threads);
  if (job.out.has_parent_path()) fs::create_directories(job.out.parent_path());
  const CheckpointFn on_ck = [&](const Classifier& m, const TrainState& s) {
    save_checkpoint(job.out, m, vocab, s);
  };
  res.curve = train(*model, examples, tcfg, res.state, on_ck, job.log);
  save_checkpoint(job.out, *model, vocab, res.state);
  if (!test_rows.empty()) {
    const auto test = examples_for_model(*model, vocab, test_rows, job.loader, job.threads);
    res.test = evaluate(*model, test, job.seed, job.threads);
  }
  return res;
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint,
                               std::span<const InstructionRecord> records,
                               const AudioLoader& loader, bool zero_shot_run, int threads) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto examples = examples_for_model(*ck.model, ck.vocab, records, loader, threads);
  return zero_shot_run ? zero_shot(*ck.model, examples, ck.state, threads)
                       : evaluate(*ck.model, examples, ck.state.seed, threads);
}

}  // namespace respllm::train
