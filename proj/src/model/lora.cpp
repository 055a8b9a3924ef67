#include "respllm/model/lora.hpp"

#include "respllm/core/ops.hpp"

#include <algorithm>
#include <cmath>

namespace respllm {

Matrix LoraAdapter::delta() const {
  return scale() * (b->value * a->value).transpose();
}

LoraAdapter make_lora(ParameterSet& params, const std::string& prefix, Eigen::Index din,
                      Eigen::Index dout, int rank, double alpha, Rng& rng, double a_std) {
  if (rank < 1 || rank > std::min(din, dout))
    throw ConfigError("lora: rank " + std::to_string(rank) + " must lie in [1, min(" +
                      std::to_string(din) + ", " + std::to_string(dout) + ")]");
  LoraAdapter ad;
  ad.rank = rank;
  ad.alpha = alpha;
  const double std_a = a_std > 0.0 ? a_std : 1.0 / std::sqrt(static_cast<double>(din));
  ad.a = &params.add(prefix + ".lora_a", normal_matrix(rank, din, std_a, rng), true);
  ad.b = &params.add(prefix + ".lora_b", Matrix::Zero(dout, rank), true);
  return ad;
}

Var lora_linear(Tape& tape, Var x, const Parameter& weight, const LoraAdapter& adapter) {
  const Matrix& w = weight.value;
  if (adapter.a->value.cols() != w.rows() || adapter.b->value.rows() != w.cols() ||
      adapter.a->value.rows() != adapter.b->value.cols())
    throw DimensionError("lora_linear: W" + shape_str(w) + " A" + shape_str(adapter.a->value) +
                         " B" + shape_str(adapter.b->value));
  if (adapter.rank > std::min(w.rows(), w.cols()))
    throw ConfigError("lora_linear: rank " + std::to_string(adapter.rank) +
                      " exceeds min(din, dout)");
  Var base = ops::matmul(x, tape.param(weight));
  Var down = ops::matmul_transposed(x, tape.param(*adapter.a));
  Var up = ops::matmul_transposed(down, tape.param(*adapter.b));
  return ops::add(base, ops::scale(up, adapter.scale()));
}

}  // namespace respllm
