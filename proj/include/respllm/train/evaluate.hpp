#pragma once

#include "respllm/model/classifier.hpp"
#include "respllm/train/trainer.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace respllm::train {

struct TaskReport {
  std::string task_id;
  std::size_t n = 0;
  std::size_t n_positive = 0;
  double positive_rate = 0.0;
  std::optional<double> auroc;  // absent when the task has a single class
};

struct EvalReport {
  std::string model_kind;
  std::vector<TaskReport> tasks;  // sorted by task id
  std::uint64_t config_hash = 0;
  std::uint64_t parameter_hash = 0;
  std::uint64_t seed = 0;
  bool zero_shot = false;

  // Mean over tasks with a defined AUROC.
  std::optional<double> mean_auroc() const;
  const TaskReport& task(const std::string& id) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

// Positive-class probabilities in example order.
std::vector<double> predict_all(const Classifier& model, std::span<const Example> examples,
                                int threads = 1);

// Per-task AUROC of predict_proba.
EvalReport evaluate(const Classifier& model, std::span<const Example> examples,
                    std::uint64_t seed = 0, int threads = 1);

// evaluate() on tasks absent from state.trained_tasks. Throws
// ContractViolation on task overlap or if parameters or the step counter
// change during the run.
EvalReport zero_shot(const Classifier& model, std::span<const Example> examples,
                     const TrainState& state, int threads = 1);

std::uint64_t config_hash(const Classifier& model);

}  // namespace respllm::train
