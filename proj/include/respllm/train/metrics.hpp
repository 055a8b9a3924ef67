#pragma once

#include <span>
#include <stdexcept>

namespace respllm::train {

struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

// P(score of a random positive > score of a random negative), ties count 1/2.
// Rank-sum with midranks, O(n log n). Labels are 0/1.
double auroc(std::span<const double> scores, std::span<const int> labels);

}  // namespace respllm::train
