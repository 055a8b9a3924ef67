#pragma once

#include "respllm/audio/encoder.hpp"
#include "respllm/audio/frontend.hpp"
#include "respllm/baselines/dms_encoding.hpp"
#include "respllm/core/random.hpp"
#include "respllm/data/synth.hpp"
#include "respllm/model/classifier.hpp"
#include "respllm/text/templates.hpp"
#include "respllm/text/vocabulary.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace respllm::train {

struct InstructionRecord {
  std::string task_id;
  std::string sample_id;
  std::string prompt_text;
  std::string dms_text;
  std::string wav_path;
  int label = 0;
  std::string split;
  text::DmsRecord dms;  // structured fields, for the hard DMS vector
};

using TaskSpecMap = std::map<std::string, text::TaskSpec>;

// TaskSpec of every source in the manifest, keyed by source id.
TaskSpecMap task_specs(const data::CohortManifest& manifest);

// One record per manifest row, in manifest order. Throws ConfigError naming
// the first source without a TaskSpec.
std::vector<InstructionRecord> build_instruction_dataset(const data::CohortManifest& manifest,
                                                         const TaskSpecMap& specs);

std::vector<InstructionRecord> filter_split(std::span<const InstructionRecord> records,
                                            const std::string& split);
std::vector<std::string> task_ids(std::span<const InstructionRecord> records);

// Seeded permutation per epoch, drawn from one persistent stream so the
// state can be checkpointed and resumed.
class EpochShuffler {
 public:
  explicit EpochShuffler(std::uint64_t seed) : rng_(derive_seed(seed, "epoch-shuffle")) {}
  std::vector<std::size_t> next(std::size_t n);
  std::string state() const;
  void restore(const std::string& state);

 private:
  Rng rng_;
};

nlohmann::json record_to_json(const InstructionRecord& r);
InstructionRecord record_from_json(const nlohmann::json& j);
void save_records(const std::filesystem::path& path, std::span<const InstructionRecord> records);
std::vector<InstructionRecord> load_records(const std::filesystem::path& path);

// Prompt and DMS texts of the records.
std::vector<std::string> text_corpus(std::span<const InstructionRecord> records);
std::vector<text::DmsRecord> dms_records(std::span<const InstructionRecord> records);

using AudioLoader = std::function<audio::Waveform(const InstructionRecord&)>;

// Reads record.wav_path, resolved against `root` when relative.
AudioLoader wav_loader(const std::filesystem::path& root);
// Regenerates audio from the manifest without touching disk.
AudioLoader synthetic_loader(const data::CohortManifest& manifest);

struct ExampleOptions {
  // With an encoder, z_a is computed once and stored in Example::encoded.
  const audio::AudioEncoder* encoder = nullptr;
  bool keep_patches = true;
  int threads = 1;
};

// Tokenized, featurized examples in record order. Deterministic for any
// thread count.
std::vector<Example> make_examples(std::span<const InstructionRecord> records,
                                   const text::Vocabulary& vocab,
                                   const baselines::DmsSchema& schema, const AudioLoader& loader,
                                   const ExampleOptions& opts = {});

// Fills Example::encoded from the patches with a (frozen) encoder.
void cache_encodings(std::span<Example> examples, const audio::AudioEncoder& encoder,
                     bool drop_patches, int threads = 1);

// Runs fn(i) for i in [0, n) on up to `threads` workers; fn must only touch
// slot i of its outputs.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace respllm::train
