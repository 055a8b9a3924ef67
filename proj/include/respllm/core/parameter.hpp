#pragma once

#include "respllm/core/matrix.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace respllm {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter(std::string n, Matrix v, bool train)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        trainable(train) {}

  void zero_grad() { grad.setZero(); }
};

// Insertion-ordered named parameter registry. Addresses are stable.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Matrix init, bool trainable);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter*> all();
  std::vector<Parameter*> trainable();
  std::size_t trainable_count() const;

  void zero_grad();
  void set_trainable(const std::function<bool(const std::string&)>& pred, bool trainable);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// FNV-1a over the raw bytes of the selected parameters' values (name included).
std::uint64_t hash_parameters(const ParameterSet& set,
                              const std::function<bool(const Parameter&)>& select = {});

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace respllm
