#include "respllm/core/tape.hpp"

namespace respllm {

Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::view(const Matrix& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) { return param(p, p.trainable); }

Var Tape::param(const Parameter& p, bool requires_grad) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external != nullptr ? *n.external : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw InputError("backward: variable belongs to another tape");
  const Matrix& v = value(out);
  if (v.rows() != 1 || v.cols() != 1)
    throw DimensionError("backward: expected a 1x1 output, got " + shape_str(v));
  if (!requires_grad(out)) return;
  grad(out)(0, 0) += 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

std::vector<std::pair<const Parameter*, Matrix>> Tape::parameter_grads() const {
  std::vector<std::pair<const Parameter*, Matrix>> out;
  for (const Node& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad) continue;
    if (n.grad.size() == 0)
      out.emplace_back(n.param, Matrix::Zero(n.param->value.rows(), n.param->value.cols()));
    else
      out.emplace_back(n.param, n.grad);
  }
  return out;
}

void Tape::accumulate_into_parameters(ParameterSet& set, double scale) const {
  for (const Node& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad || n.grad.size() == 0) continue;
    Parameter* p = set.find(n.param->name);
    if (p == nullptr || p != n.param) continue;
    p->grad.noalias() += scale * n.grad;
  }
}

}  // namespace respllm
