#pragma once

#include "respllm/core/random.hpp"
#include "respllm/core/tape.hpp"

#include <string>

namespace respllm {

// Low-rank delta on a frozen [din x dout] weight W:
//   y = x W + (alpha / r) * x A^T B^T,  A: [r x din], B: [dout x r].
// In the usual [dout x din] convention the delta is (alpha / r) * B A.
struct LoraAdapter {
  Parameter* a = nullptr;
  Parameter* b = nullptr;
  int rank = 0;
  double alpha = 0.0;

  double scale() const { return alpha / static_cast<double>(rank); }
  // (alpha / r) (B A)^T, i.e. the delta in this library's [din x dout] layout.
  Matrix delta() const;
};

// A ~ N(0, a_std^2), B = 0: the adapter starts as an exact no-op.
// a_std <= 0 selects 1 / sqrt(din).
LoraAdapter make_lora(ParameterSet& params, const std::string& prefix, Eigen::Index din,
                      Eigen::Index dout, int rank, double alpha, Rng& rng, double a_std = 0.0);

Var lora_linear(Tape& tape, Var x, const Parameter& weight, const LoraAdapter& adapter);

}  // namespace respllm
