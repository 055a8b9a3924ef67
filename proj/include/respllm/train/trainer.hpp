#pragma once

#include "respllm/core/optimizer.hpp"
#include "respllm/model/classifier.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace respllm::train {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 16;
  // > 0 stops after this many steps, cycling epochs as needed.
  std::int64_t max_steps = 0;
  AdamWConfig optim{1e-3};
  // > 0 invokes the checkpoint callback every N steps.
  int checkpoint_every = 0;
  // Per-sample gradients are reduced in sample order, so results do not
  // depend on the thread count.
  int threads = 1;
  int log_every = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainState {
  std::int64_t step = 0;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_state;  // epoch shuffler stream; empty = fresh from seed
  std::vector<std::string> trained_tasks;

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
};

struct LossPoint {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Non-finite training loss. Trainable parameters have been restored to the
// last values that produced a finite loss.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::int64_t at_step, const std::string& msg)
      : std::runtime_error(msg), step(at_step) {}
  std::int64_t step;
};

using CheckpointFn = std::function<void(const Classifier&, const TrainState&)>;

// Minibatch AdamW on mean cross-entropy over shuffled examples. Only the
// model's trainable parameters change. `state` carries the step counter and
// shuffler across calls; its trained_tasks gains every task seen.
std::vector<LossPoint> train(Classifier& model, std::span<const Example> examples,
                             const TrainConfig& cfg, TrainState& state,
                             const CheckpointFn& on_checkpoint = {}, std::ostream* log = nullptr);

// Mean loss and gradient of one batch, accumulated into Parameter::grad.
double batch_loss_and_grad(Classifier& model, std::span<const Example* const> batch, int threads);

// "step,epoch,loss,lr" with 17 significant digits.
std::string loss_curve_csv(std::span<const LossPoint> curve);
void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> curve);
std::uint64_t hash_loss_curve(std::span<const LossPoint> curve);

}  // namespace respllm::train
