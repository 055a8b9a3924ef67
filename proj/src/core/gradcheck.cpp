#include "respllm/core/gradcheck.hpp"

#include "respllm/core/random.hpp"

#include <algorithm>
#include <cmath>

namespace respllm {

GradCheckResult check_gradients(const std::string& name, ParameterSet& params,
                                const std::function<Var(Tape&)>& loss,
                                const GradCheckOptions& opts) {
  GradCheckResult result;
  result.name = name;

  params.zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
    tape.accumulate_into_parameters(params);
  }

  std::vector<Parameter*> trainable = params.trainable();
  std::size_t total = 0;
  for (const Parameter* p : trainable) total += static_cast<std::size_t>(p->value.size());
  if (total == 0) throw InputError("check_gradients(" + name + "): no trainable coordinates");

  auto eval = [&]() {
    Tape tape;
    return loss(tape).value()(0, 0);
  };

  Rng rng(derive_seed(opts.seed, name));
  for (int c = 0; c < opts.coordinates; ++c) {
    std::size_t flat = rng.below(total);
    Parameter* target = nullptr;
    for (Parameter* p : trainable) {
      const auto n = static_cast<std::size_t>(p->value.size());
      if (flat < n) {
        target = p;
        break;
      }
      flat -= n;
    }
    double& x = target->value.data()[flat];
    const double saved = x;
    x = saved + opts.step;
    const double fp = eval();
    x = saved - opts.step;
    const double fm = eval();
    x = saved;
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double analytic = target->grad.data()[flat];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
    result.max_relative_error = std::max(result.max_relative_error,
                                         std::abs(analytic - numeric) / denom);
    ++result.coordinates;
  }
  result.passed = result.max_relative_error <= opts.tolerance;
  params.zero_grad();
  return result;
}

}  // namespace respllm
