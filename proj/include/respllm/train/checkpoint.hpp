#pragma once

#include "respllm/baselines/baselines.hpp"
#include "respllm/model/respllm.hpp"
#include "respllm/text/vocabulary.hpp"
#include "respllm/train/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace respllm::train {

inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'S', 'P', 'L', 'L', 'M', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : InputError {
  using InputError::InputError;
};

// Construction settings for every model kind the trainer knows.
struct ModelOptions {
  RespLLMConfig respllm;            // respllm; its encoder config is shared by all kinds
  int text_width = 64;              // soft DMS embedding width
  baselines::DmsMode fusion_dms = baselines::DmsMode::Hard;
  bool audio_finetune_encoder = true;
  bool fusion_finetune_encoder = false;
  int xattn_heads = 4;

  nlohmann::json to_json() const;
  static ModelOptions from_json(const nlohmann::json& j);
};

inline constexpr const char* kModelKinds[] = {"respllm",       "audio",      "dms-hard",
                                              "dms-soft",      "fusion-concat", "fusion-add",
                                              "fusion-xattn"};

// Fresh model of `kind`. vocab_size overrides the configured vocabulary size.
std::unique_ptr<Classifier> make_model(const std::string& kind, const ModelOptions& opts,
                                       const baselines::DmsSchema& schema, int vocab_size,
                                       std::uint64_t seed);

// Rebuilds a model from the kind and config() it reported.
std::unique_ptr<Classifier> make_classifier(const std::string& kind, const nlohmann::json& config);

struct Checkpoint {
  std::unique_ptr<Classifier> model;
  text::Vocabulary vocab;
  TrainState state;
};

// Layout (little-endian):
//   magic[8] | u32 version | u64 n, header JSON {kind, config, state} |
//   u64 n, vocabulary text | u64 count |
//   per parameter: u32 n, name | u8 trainable | u64 rows | u64 cols | f64[rows*cols]
std::string serialize_checkpoint(const Classifier& model, const text::Vocabulary& vocab,
                                 const TrainState& state);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Classifier& model,
                     const text::Vocabulary& vocab, const TrainState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace respllm::train
