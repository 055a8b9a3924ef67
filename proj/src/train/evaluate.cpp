#include "respllm/train/evaluate.hpp"

#include "respllm/train/instructions.hpp"
#include "respllm/train/metrics.hpp"

#include <cstdio>
#include <map>

namespace respllm::train {

std::optional<double> EvalReport::mean_auroc() const {
  double sum = 0.0;
  int n = 0;
  for (const TaskReport& t : tasks)
    if (t.auroc) {
      sum += *t.auroc;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

const TaskReport& EvalReport::task(const std::string& id) const {
  for (const TaskReport& t : tasks)
    if (t.task_id == id) return t;
  throw InputError("eval report: no task '" + id + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["model"] = model_kind;
  j["seed"] = seed;
  j["zero_shot"] = zero_shot;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash));
  j["config_hash"] = buf;
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(parameter_hash));
  j["parameter_hash"] = buf;
  j["tasks"] = nlohmann::json::array();
  for (const TaskReport& t : tasks) {
    nlohmann::json r = {{"task_id", t.task_id},
                        {"n", t.n},
                        {"n_positive", t.n_positive},
                        {"positive_rate", t.positive_rate}};
    r["auroc"] = t.auroc ? nlohmann::json(*t.auroc) : nlohmann::json(nullptr);
    j["tasks"].push_back(r);
  }
  const auto m = mean_auroc();
  j["mean_auroc"] = m ? nlohmann::json(*m) : nlohmann::json(nullptr);
  return j;
}

std::string EvalReport::table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s\n", "task", "n", "pos", "pos_rate",
                "auroc");
  out += buf;
  for (const TaskReport& t : tasks) {
    char au[16] = "n/a";
    if (t.auroc) std::snprintf(au, sizeof au, "%.4f", *t.auroc);
    std::snprintf(buf, sizeof buf, "%-12s %8zu %8zu %8.3f %8s\n", t.task_id.c_str(), t.n,
                  t.n_positive, t.positive_rate, au);
    out += buf;
  }
  const auto m = mean_auroc();
  char au[16] = "n/a";
  if (m) std::snprintf(au, sizeof au, "%.4f", *m);
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s\n", "mean", "", "", "", au);
  out += buf;
  return out;
}

std::vector<double> predict_all(const Classifier& model, std::span<const Example> examples,
                                int threads) {
  std::vector<double> out(examples.size());
  parallel_for(examples.size(), threads,
               [&](std::size_t i) { out[i] = model.predict_proba(examples[i]); });
  return out;
}

std::uint64_t config_hash(const Classifier& model) {
  const std::string s = model.kind() + "\n" + model.config().dump();
  return fnv1a(s.data(), s.size());
}

EvalReport evaluate(const Classifier& model, std::span<const Example> examples,
                    std::uint64_t seed, int threads) {
  if (examples.empty()) throw InputError("evaluate: empty evaluation set");
  const std::vector<double> scores = predict_all(model, examples, threads);
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_task;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& [s, l] = by_task[examples[i].task_id];
    s.push_back(scores[i]);
    l.push_back(examples[i].label);
  }
  EvalReport rep;
  rep.model_kind = model.kind();
  rep.seed = seed;
  rep.config_hash = config_hash(model);
  rep.parameter_hash = hash_parameters(model.parameters());
  for (const auto& [task, sl] : by_task) {
    TaskReport t;
    t.task_id = task;
    t.n = sl.first.size();
    for (int l : sl.second) t.n_positive += static_cast<std::size_t>(l);
    t.positive_rate = static_cast<double>(t.n_positive) / static_cast<double>(t.n);
    if (t.n_positive > 0 && t.n_positive < t.n) t.auroc = auroc(sl.first, sl.second);
    rep.tasks.push_back(t);
  }
  return rep;
}

EvalReport zero_shot(const Classifier& model, std::span<const Example> examples,
                     const TrainState& state, int threads) {
  for (const Example& ex : examples)
    for (const std::string& t : state.trained_tasks)
      if (ex.task_id == t)
        throw ContractViolation("zero_shot: task '" + t + "' was seen during training");
  const std::int64_t step_before = state.step;
  const std::uint64_t before = hash_parameters(model.parameters());
  EvalReport rep = evaluate(model, examples, state.seed, threads);
  rep.zero_shot = true;
  const std::uint64_t after = hash_parameters(model.parameters());
  if (before != after) throw ContractViolation("zero_shot: parameters changed during inference");
  if (state.step != step_before)
    throw ContractViolation("zero_shot: step counter changed during inference");
  return rep;
}

}  // namespace respllm::train
