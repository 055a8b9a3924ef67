#pragma once

#include "respllm/core/tape.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace respllm {

struct GradCheckOptions {
  int coordinates = 50;
  double step = 1e-5;
  double tolerance = 1e-3;
  // Relative error uses max(|analytic|, |numeric|, abs_floor) as denominator.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  int coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Compares tape gradients of `loss` against central differences on randomly
// drawn coordinates of the trainable parameters in `params`. Parameter values
// are restored after each probe.
GradCheckResult check_gradients(const std::string& name, ParameterSet& params,
                                const std::function<Var(Tape&)>& loss,
                                const GradCheckOptions& opts = {});

}  // namespace respllm
