#include "respllm/core/ops.hpp"

#include <cmath>
#include <memory>

namespace respllm {

namespace {
constexpr double kExpCutoff = -700.0;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

// tanh through one vectorizable exp; exact limits at +-inf.
Matrix tanh_matrix(const Matrix& u) {
  return (1.0 - 2.0 / ((2.0 * u.array()).exp() + 1.0)).matrix();
}
}  // namespace

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    // Entries below the cutoff are exactly 0 (and skip the slow underflow path of exp).
    const auto shifted = (logits.row(i).array() - m).eval();
    out.row(i) = (shifted < kExpCutoff).select(0.0, shifted.max(kExpCutoff).exp()).matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

RowVector softmax(const RowVector& logits) {
  Matrix m = logits;
  return softmax_rows(m).row(0);
}

namespace ops {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw InputError(std::string(op) + ": operands belong to different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: " + shape_str(av) + " * " + shape_str(bv));
  Matrix out;
  out.noalias() = av * bv;
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai).noalias() += g * t.value(bi).transpose();
    if (t.requires_grad(bi)) t.grad(bi).noalias() += t.value(ai).transpose() * g;
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b, "matmul_transposed");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("matmul_transposed: " + shape_str(av) + " * " + shape_str(bv) + "^T");
  Matrix out;
  out.noalias() = av * bv.transpose();
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai).noalias() += g * t.value(bi);
    if (t.requires_grad(bi)) t.grad(bi).noalias() += g.transpose() * t.value(ai);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw DimensionError("add: " + shape_str(av) + " + " + shape_str(bv));
  Matrix out = av + bv;
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai) += g;
    if (t.requires_grad(bi)) t.grad(bi) += g;
  });
}

Var add_row_broadcast(Var a, Var row) {
  require_same_tape(a, row, "add_row_broadcast");
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw DimensionError("add_row_broadcast: " + shape_str(av) + " + " + shape_str(rv));
  Matrix out = av.rowwise() + rv.row(0);
  const bool rg = a.requires_grad() || row.requires_grad();
  return a.tape->record(std::move(out), rg, [ai = a.id, ri = row.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai) += g;
    if (t.requires_grad(ri)) t.grad(ri) += g.colwise().sum();
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->record(std::move(out), a.requires_grad(), [ai = a.id, s](Tape& t, int self) {
    t.grad(ai) += s * t.grad(self);
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_same_tape(x, weight, "linear");
  require_same_tape(x, bias, "linear");
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  const Matrix& bv = bias.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
    throw DimensionError("linear: x" + shape_str(xv) + " W" + shape_str(wv) + " b" +
                         shape_str(bv));
  Matrix out;
  out.noalias() = xv * wv;
  out.rowwise() += bv.row(0);
  const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return x.tape->record(std::move(out), rg,
                        [xi = x.id, wi = weight.id, bi = bias.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.requires_grad(xi))
                            t.grad(xi).noalias() += g * t.value(wi).transpose();
                          if (t.requires_grad(wi))
                            t.grad(wi).noalias() += t.value(xi).transpose() * g;
                          if (t.requires_grad(bi)) t.grad(bi) += g.colwise().sum();
                        });
}

Var linear(Var x, Var weight) {
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  if (xv.cols() != wv.rows())
    throw DimensionError("linear: x" + shape_str(xv) + " W" + shape_str(wv));
  return matmul(x, weight);
}

Var gelu(Var a) {
  const Matrix& av = a.value();
  auto th = std::make_shared<Matrix>(
      tanh_matrix((kGeluC * (av.array() + kGeluK * av.array().cube())).matrix()));
  Matrix out = (0.5 * av.array() * (1.0 + th->array())).matrix();
  return a.tape->record(std::move(out), a.requires_grad(), [ai = a.id, th](Tape& t, int self) {
    const auto x = t.value(ai).array();
    const auto h = th->array();
    const auto d = 0.5 * (1.0 + h) + 0.5 * x * (1.0 - h * h) * kGeluC * (1.0 + 3.0 * kGeluK * x * x);
    t.grad(ai).array() += t.grad(self).array() * d;
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma, "layer_norm");
  require_same_tape(x, beta, "layer_norm");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const Matrix& xv = x.value();
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  const Eigen::Index n = xv.cols();
  if (gv.rows() != 1 || gv.cols() != n || bv.rows() != 1 || bv.cols() != n)
    throw DimensionError("layer_norm: x" + shape_str(xv) + " gamma" + shape_str(gv) + " beta" +
                         shape_str(bv));
  auto xhat = std::make_shared<Matrix>(xv.rows(), n);
  auto inv_std = std::make_shared<Eigen::VectorXd>(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (xv.row(i).array() - mean) * is;
  }
  Matrix out = xhat->array().rowwise() * gv.row(0).array();
  out.rowwise() += bv.row(0);
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape->record(
      std::move(out), rg,
      [xi = x.id, gi = gamma.id, bi = beta.id, xhat, inv_std](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(gi)) t.grad(gi) += (g.array() * xhat->array()).colwise().sum().matrix();
        if (t.requires_grad(bi)) t.grad(bi) += g.colwise().sum();
        if (t.requires_grad(xi)) {
          const Matrix& gv = t.value(gi);
          Matrix& gx = t.grad(xi);
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const RowVector dxhat = (g.row(i).array() * gv.row(0).array()).matrix();
            const double m1 = dxhat.mean();
            const double m2 = (dxhat.array() * xhat->row(i).array()).mean();
            gx.row(i).array() +=
                (*inv_std)(i) * (dxhat.array() - m1 - xhat->row(i).array() * m2);
          }
        }
      });
}

Var softmax(Var logits) {
  Matrix out = softmax_rows(logits.value());
  return logits.tape->record(std::move(out), logits.requires_grad(),
                             [li = logits.id](Tape& t, int self) {
                               const Matrix& g = t.grad(self);
                               const Matrix& p = t.value(self);
                               Matrix& gl = t.grad(li);
                               for (Eigen::Index i = 0; i < p.rows(); ++i) {
                                 const double dot = g.row(i).dot(p.row(i));
                                 gl.row(i).array() += p.row(i).array() * (g.row(i).array() - dot);
                               }
                             });
}

Var attention(Var q, Var k, Var v, int heads, const AttentionMask& mask) {
  require_same_tape(q, k, "attention");
  require_same_tape(q, v, "attention");
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const Eigen::Index width = qv.cols();
  if (heads <= 0 || width % heads != 0)
    throw ConfigError("attention: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (kv.cols() != width || vv.cols() != width || kv.rows() != vv.rows())
    throw DimensionError("attention: q" + shape_str(qv) + " k" + shape_str(kv) + " v" +
                         shape_str(vv));
  const Eigen::Index lq = qv.rows();
  const Eigen::Index lk = kv.rows();
  if (!mask.key_valid.empty() && static_cast<Eigen::Index>(mask.key_valid.size()) != lk)
    throw DimensionError("attention: mask covers " + std::to_string(mask.key_valid.size()) +
                         " keys, sequence has " + std::to_string(lk));
  const Eigen::Index dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix additive = Matrix::Zero(lq, lk);
  bool any_masked = false;
  for (Eigen::Index i = 0; i < lq; ++i)
    for (Eigen::Index j = 0; j < lk; ++j)
      if (!mask.allowed(i, j)) {
        additive(i, j) = kMaskedLogit;
        any_masked = true;
      }

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(heads));
  Matrix out(lq, width);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Matrix scores;
    scores.noalias() = qv.middleCols(c0, dh) * kv.middleCols(c0, dh).transpose();
    scores *= inv_sqrt;
    if (any_masked) scores += additive;
    Matrix p = softmax_rows(scores);
    out.middleCols(c0, dh).noalias() = p * vv.middleCols(c0, dh);
    (*probs)[static_cast<std::size_t>(h)] = std::move(p);
  }

  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad();
  return q.tape->record(
      std::move(out), rg,
      [qi = q.id, ki = k.id, vi = v.id, heads, dh, inv_sqrt, probs](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& qv = t.value(qi);
        const Matrix& kv = t.value(ki);
        const Matrix& vv = t.value(vi);
        const bool gq = t.requires_grad(qi), gk = t.requires_grad(ki), gv = t.requires_grad(vi);
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index c0 = h * dh;
          const Matrix& p = (*probs)[static_cast<std::size_t>(h)];
          const auto gh = g.middleCols(c0, dh);
          if (gv) t.grad(vi).middleCols(c0, dh).noalias() += p.transpose() * gh;
          if (!gq && !gk) continue;
          Matrix dp;
          dp.noalias() = gh * vv.middleCols(c0, dh).transpose();
          Matrix ds(p.rows(), p.cols());
          for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double dot = dp.row(i).dot(p.row(i));
            ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
          }
          ds *= inv_sqrt;
          if (gq) t.grad(qi).middleCols(c0, dh).noalias() += ds * kv.middleCols(c0, dh);
          if (gk) t.grad(ki).middleCols(c0, dh).noalias() += ds.transpose() * qv.middleCols(c0, dh);
        }
      });
}

Var multi_head_attention(Var x, Var wq, Var wk, Var wv, Var wo, int heads,
                         const AttentionMask& mask) {
  const Eigen::Index width = x.cols();
  if (heads <= 0 || width % heads != 0)
    throw ConfigError("multi_head_attention: width " + std::to_string(width) +
                      " not divisible by " + std::to_string(heads) + " heads");
  Var q = matmul(x, wq);
  Var k = matmul(x, wk);
  Var v = matmul(x, wv);
  return matmul(attention(q, k, v, heads, mask), wo);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("concat_rows: no inputs");
  Tape* tape = parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape != tape) throw InputError("concat_rows: operands belong to different tapes");
    if (p.cols() != cols)
      throw DimensionError("concat_rows: width " + std::to_string(p.cols()) + " vs " +
                           std::to_string(cols));
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    if (p.rows() > 0) out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id, r);
    r += p.rows();
  }
  return tape->record(std::move(out), rg, [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, r0] : spans) {
      const Eigen::Index n = t.value(id).rows();
      if (n > 0 && t.requires_grad(id)) t.grad(id) += g.middleRows(r0, n);
    }
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b, "concat_cols");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows())
    throw DimensionError("concat_cols: " + shape_str(av) + " | " + shape_str(bv));
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const bool rg = a.requires_grad() || b.requires_grad();
  const Eigen::Index ac = av.cols(), bc = bv.cols();
  return a.tape->record(std::move(out), rg, [ai = a.id, bi = b.id, ac, bc](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai) += g.leftCols(ac);
    if (t.requires_grad(bi)) t.grad(bi) += g.rightCols(bc);
  });
}

Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (begin < 0 || count < 0 || begin + count > xv.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_str(xv));
  Matrix out = xv.middleRows(begin, count);
  return x.tape->record(std::move(out), x.requires_grad(),
                        [xi = x.id, begin, count](Tape& t, int self) {
                          t.grad(xi).middleRows(begin, count) += t.grad(self);
                        });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw InputError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape->record(std::move(out), table.requires_grad(),
                            [ti = table.id, idx = std::move(idx)](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              Matrix& gt = t.grad(ti);
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                            });
}

Var masked_mean_rows(Var x, const std::vector<char>& valid) {
  const Matrix& xv = x.value();
  if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != xv.rows())
    throw DimensionError("masked_mean_rows: mask of " + std::to_string(valid.size()) +
                         " for " + shape_str(xv));
  Eigen::Index count = 0;
  Matrix out = Matrix::Zero(1, xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    if (!valid.empty() && valid[static_cast<std::size_t>(i)] == 0) continue;
    out += xv.row(i);
    ++count;
  }
  if (count == 0) throw InputError("masked_mean_rows: no valid rows");
  out /= static_cast<double>(count);
  const double inv = 1.0 / static_cast<double>(count);
  return x.tape->record(std::move(out), x.requires_grad(),
                        [xi = x.id, valid, inv](Tape& t, int self) {
                          const RowVector g = t.grad(self).row(0) * inv;
                          Matrix& gx = t.grad(xi);
                          for (Eigen::Index i = 0; i < gx.rows(); ++i)
                            if (valid.empty() || valid[static_cast<std::size_t>(i)] != 0)
                              gx.row(i) += g;
                        });
}

Var cross_entropy(Var logits, int label) {
  const Matrix& lv = logits.value();
  if (lv.rows() != 1) throw DimensionError("cross_entropy: expected one logit row, got " +
                                           shape_str(lv));
  if (label < 0 || label >= lv.cols())
    throw InputError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(lv.cols()) + ")");
  const double m = lv.maxCoeff();
  const double lse = m + std::log((lv.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - lv(0, label);
  return logits.tape->record(std::move(out), logits.requires_grad(),
                             [li = logits.id, label](Tape& t, int self) {
                               const double g = t.grad(self)(0, 0);
                               Matrix p = softmax_rows(t.value(li));
                               p(0, label) -= 1.0;
                               t.grad(li) += g * p;
                             });
}

Var weighted_sum(Var x, const Matrix& weights) {
  const Matrix& xv = x.value();
  if (weights.rows() != xv.rows() || weights.cols() != xv.cols())
    throw DimensionError("weighted_sum: " + shape_str(xv) + " vs weights " + shape_str(weights));
  Matrix out(1, 1);
  out(0, 0) = (xv.array() * weights.array()).sum();
  return x.tape->record(std::move(out), x.requires_grad(),
                        [xi = x.id, weights](Tape& t, int self) {
                          t.grad(xi) += t.grad(self)(0, 0) * weights;
                        });
}

}  // namespace ops
}  // namespace respllm
