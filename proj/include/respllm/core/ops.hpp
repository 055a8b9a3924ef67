#pragma once

#include "respllm/core/tape.hpp"

#include <span>
#include <vector>

namespace respllm {

inline constexpr double kMaskedLogit = -1e9;

// Which keys each query may attend to. Masked logits get kMaskedLogit added,
// which underflows to an exact zero weight after the softmax.
struct AttentionMask {
  bool causal = false;
  std::vector<char> key_valid;  // empty: every key valid

  bool allowed(Eigen::Index query, Eigen::Index key) const {
    if (causal && key > query) return false;
    if (!key_valid.empty() && key_valid[static_cast<std::size_t>(key)] == 0) return false;
    return true;
  }
};

// Value-level helpers, no tape involved.
Matrix softmax_rows(const Matrix& logits);
RowVector softmax(const RowVector& logits);

namespace ops {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_transposed(Var a, Var b);
Var add(Var a, Var b);
Var add_row_broadcast(Var a, Var row);
Var scale(Var a, double s);

// y = x W + b, W is [din x dout], b is [1 x dout].
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

Var gelu(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax(Var logits);

// Scaled dot-product attention over `heads` column groups of q/k/v.
// q: [Lq x S], k and v: [Lk x S]. Returns [Lq x S] (heads concatenated).
Var attention(Var q, Var k, Var v, int heads, const AttentionMask& mask);

// attention(xWq, xWk, xWv) projected by Wo. All weights [S x S].
Var multi_head_attention(Var x, Var wq, Var wk, Var wv, Var wo, int heads,
                         const AttentionMask& mask);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var table, std::span<const int> ids);

// Mean over rows whose `valid` flag is set (all rows when empty) -> [1 x cols].
Var masked_mean_rows(Var x, const std::vector<char>& valid = {});

// -log softmax(logits)[label] for a [1 x C] logit row -> [1 x 1].
Var cross_entropy(Var logits, int label);

// sum(x .* weights) -> [1 x 1]; a generic scalar probe for gradient checks.
Var weighted_sum(Var x, const Matrix& weights);

}  // namespace ops
}  // namespace respllm
