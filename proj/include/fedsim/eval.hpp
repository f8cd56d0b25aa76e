#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

// Row-major count matrix: rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // num_classes * num_classes

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : num_classes(k), counts(k * k, 0) {}

  std::uint64_t& at(std::size_t true_k, std::size_t pred_k) {
    return counts[true_k * num_classes + pred_k];
  }
  std::uint64_t at(std::size_t true_k, std::size_t pred_k) const {
    return counts[true_k * num_classes + pred_k];
  }
  std::uint64_t row_sum(std::size_t true_k) const;
  std::uint64_t total() const;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

// Top-1 accuracy and confusion counts; argmax ties go to the lowest index.
EvalResult evaluate(const MlpParams& params, const Dataset& test,
                    Execution exec = Execution::serial);

// Class buckets by TRAINING-set size: Many strictly above many_min, Few
// strictly below few_max, Medium inclusive in between.
struct GroupThresholds {
  std::size_t many_min = 100;
  std::size_t few_max = 20;
};

struct GroupAccuracy {
  double all = 0.0;
  // A group with no test examples is absent, never reported as zero.
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

// Group accuracies over the test confusion, bucketing classes by their
// training-set counts. Throws if train_counts does not match the matrix or
// the thresholds are inverted.
GroupAccuracy group_accuracy(const ConfusionMatrix& confusion,
                             const std::vector<std::size_t>& train_counts,
                             const GroupThresholds& thresholds);

struct NormalizedConfusion {
  std::size_t num_classes = 0;
  std::vector<double> rows;          // row-stochastic where the row had data
  std::vector<std::uint8_t> zero_row;  // 1 where the class had no test data

  double at(std::size_t true_k, std::size_t pred_k) const {
    return rows[true_k * num_classes + pred_k];
  }
};

// Each row divided by its sum; empty rows are left at zero and flagged.
NormalizedConfusion normalize_confusion(const ConfusionMatrix& confusion);

}  // namespace fedsim
