#pragma once

#include "respllm/core/matrix.hpp"
#include "respllm/core/parameter.hpp"

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace respllm {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order and
// replayed backwards. Nodes that do not require a gradient are never given a
// gradient buffer, so frozen weights cost nothing on the backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad);
  // Constant read in place, no copy; `value` must outlive the tape.
  Var view(const Matrix& value);
  // Values are read in place; the parameter must outlive the tape.
  // Repeated calls with the same parameter return the first node created for it.
  Var param(const Parameter& p);
  Var param(const Parameter& p, bool requires_grad);

  Var record(Matrix value, bool requires_grad, BackwardFn backward);

  const Matrix& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external != nullptr ? *n.external : n.value;
  }
  const Matrix& value(Var v) const { return value(v.id); }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  // Gradient buffer of a node, allocated (zeroed) on first access.
  Matrix& grad(int id);
  Matrix& grad(Var v) { return grad(v.id); }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() > 0; }

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to every
  // requires_grad node.
  void backward(Var out);

  // Gradients of every parameter leaf that required a gradient, in first-use order.
  std::vector<std::pair<const Parameter*, Matrix>> parameter_grads() const;
  // Adds scale * gradient into Parameter::grad for every parameter leaf.
  void accumulate_into_parameters(ParameterSet& set, double scale = 1.0) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    const Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

}  // namespace respllm
