#include "respllm/train/trainer.hpp"

#include "respllm/core/ops.hpp"
#include "respllm/train/instructions.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

namespace respllm::train {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (!(optim.lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(optim.eps > 0.0) || optim.weight_decay < 0.0)
    throw ConfigError("train: eps must be > 0 and weight_decay >= 0");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"max_steps", max_steps},
          {"lr", optim.lr},
          {"beta1", optim.beta1},
          {"beta2", optim.beta2},
          {"eps", optim.eps},
          {"weight_decay", optim.weight_decay},
          {"checkpoint_every", checkpoint_every},
          {"threads", threads},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.optim.lr = j.value("lr", c.optim.lr);
  c.optim.beta1 = j.value("beta1", c.optim.beta1);
  c.optim.beta2 = j.value("beta2", c.optim.beta2);
  c.optim.eps = j.value("eps", c.optim.eps);
  c.optim.weight_decay = j.value("weight_decay", c.optim.weight_decay);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.threads = j.value("threads", c.threads);
  c.log_every = j.value("log_every", c.log_every);
  c.validate();
  return c;
}

nlohmann::json TrainState::to_json() const {
  return {{"step", step},
          {"epoch", epoch},
          {"seed", seed},
          {"rng_state", rng_state},
          {"trained_tasks", trained_tasks}};
}

TrainState TrainState::from_json(const nlohmann::json& j) {
  TrainState s;
  s.step = j.value("step", std::int64_t{0});
  s.epoch = j.value("epoch", 0);
  s.seed = j.value("seed", std::uint64_t{0});
  s.rng_state = j.value("rng_state", std::string());
  s.trained_tasks = j.value("trained_tasks", std::vector<std::string>{});
  return s;
}

double batch_loss_and_grad(Classifier& model, std::span<const Example* const> batch,
                           int threads) {
  const std::size_t n = batch.size();
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> losses(n, 0.0);
  ParameterSet& params = model.parameters();
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      Tape tape;
      Var loss = ops::cross_entropy(model.logits(tape, *batch[i]), batch[i]->label);
      losses[i] = loss.value()(0, 0);
      tape.backward(loss);
      tape.accumulate_into_parameters(params, scale);
    }
  } else {
    std::vector<std::vector<std::pair<const Parameter*, Matrix>>> grads(n);
    parallel_for(n, threads, [&](std::size_t i) {
      Tape tape;
      Var loss = ops::cross_entropy(model.logits(tape, *batch[i]), batch[i]->label);
      losses[i] = loss.value()(0, 0);
      tape.backward(loss);
      grads[i] = tape.parameter_grads();
    });
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& [p, g] : grads[i]) {
        Parameter* target = params.find(p->name);
        if (target == p) target->grad.noalias() += scale * g;
      }
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total * scale;
}

std::vector<LossPoint> train(Classifier& model, std::span<const Example> examples,
                             const TrainConfig& cfg, TrainState& state,
                             const CheckpointFn& on_checkpoint, std::ostream* log) {
  cfg.validate();
  std::vector<LossPoint> curve;
  const std::int64_t planned =
      cfg.max_steps > 0 ? cfg.max_steps
                        : static_cast<std::int64_t>(cfg.epochs) *
                              ((static_cast<std::int64_t>(examples.size()) + cfg.batch_size - 1) /
                               cfg.batch_size);
  if (examples.empty()) throw InputError("train: empty training set");
  if (planned == 0) return curve;

  std::set<std::string> tasks(state.trained_tasks.begin(), state.trained_tasks.end());
  for (const Example& ex : examples) tasks.insert(ex.task_id);
  state.trained_tasks.assign(tasks.begin(), tasks.end());

  EpochShuffler shuffler(state.seed);
  if (!state.rng_state.empty()) shuffler.restore(state.rng_state);

  std::vector<Parameter*> trainable = model.parameters().trainable();
  AdamW opt(trainable, cfg.optim);
  std::vector<Matrix> last_good(trainable.size());

  std::int64_t done = 0;
  while (done < planned) {
    const std::vector<std::size_t> order = shuffler.next(examples.size());
    for (std::size_t start = 0; start < order.size() && done < planned;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&examples[order[k]]);

      model.parameters().zero_grad();
      const double loss = batch_loss_and_grad(model, batch, cfg.threads);
      if (!std::isfinite(loss)) {
        if (state.step > 0 || done > 0)
          for (std::size_t i = 0; i < trainable.size(); ++i)
            if (last_good[i].size() > 0) trainable[i]->value = last_good[i];
        model.parameters().zero_grad();
        if (on_checkpoint) on_checkpoint(model, state);
        throw DivergenceError(state.step, "train: non-finite loss at step " +
                                              std::to_string(state.step + 1) +
                                              "; restored last good parameters");
      }
      for (std::size_t i = 0; i < trainable.size(); ++i) last_good[i] = trainable[i]->value;
      opt.step();
      ++state.step;
      ++done;
      curve.push_back({state.step, state.epoch, loss, cfg.optim.lr});
      if (log != nullptr && cfg.log_every > 0 && state.step % cfg.log_every == 0)
        *log << "step " << state.step << " epoch " << state.epoch << " loss " << loss << "\n";
      if (on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
        state.rng_state = shuffler.state();
        on_checkpoint(model, state);
      }
    }
    ++state.epoch;
  }
  model.parameters().zero_grad();
  state.rng_state = shuffler.state();
  return curve;
}

std::string loss_curve_csv(std::span<const LossPoint> curve) {
  std::string out = "step,epoch,loss,lr\n";
  char buf[96];
  for (const LossPoint& p : curve) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g\n", static_cast<long long>(p.step),
                  p.epoch, p.loss, p.lr);
    out += buf;
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("loss curve: cannot write " + path.string());
  out << loss_curve_csv(curve);
}

std::uint64_t hash_loss_curve(std::span<const LossPoint> curve) {
  const std::string csv = loss_curve_csv(curve);
  return fnv1a(csv.data(), csv.size());
}

}  // namespace respllm::train
