#pragma once

#include "respllm/core/gradcheck.hpp"

#include <vector>

namespace respllm::train {

// Finite-difference checks of every differentiable op, the building blocks
// and the full loss of each model kind, in double precision.
std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& opts = {});

}  // namespace respllm::train
