#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

// Labeled feature vectors with class indices in [0, num_classes).
// `origin` tracks each example's id in the root dataset it was derived from,
// so disjointness of splits can be checked as plain index-set intersection.
struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;      // size() x feature_dim, row-major
  std::vector<std::int32_t> labels;  // size()
  std::vector<std::size_t> origin;   // size()

  std::size_t size() const { return labels.size(); }
  std::span<const double> example(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
  std::vector<std::size_t> class_counts() const;
  // Throws std::invalid_argument on label range, size, or finiteness problems.
  void validate() const;
};

// New dataset holding the given examples, origin mapped through.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// Class-conditional Gaussian clusters: K means drawn once from the seeded
// stream and scaled by class_separation, unit covariance around each mean.
Dataset generate_synthetic(std::size_t num_classes, std::size_t feature_dim,
                           std::size_t n_per_class, double class_separation,
                           std::uint64_t seed);

// Seeded per-class split: exactly per_class examples of every class in
// `first`, the rest in `second`. Throws naming the first class that is short.
std::pair<Dataset, Dataset> take_per_class(const Dataset& data,
                                           std::size_t per_class,
                                           std::uint64_t seed);

// Seeded per-class split by fraction (floor of fraction * class count).
std::pair<Dataset, Dataset> split_fraction(const Dataset& data, double fraction,
                                           std::uint64_t seed);

// Exponential long-tail profile: class k keeps
// floor(max_per_class * IF^(-k / (K-1))) samples.
struct LongTailSpec {
  double imbalance_factor = 1.0;  // max-class count / min-class count, >= 1
  std::size_t max_per_class = 0;
};

std::vector<std::size_t> long_tail_targets(const LongTailSpec& spec,
                                           std::size_t num_classes);

// Seeded uniform subsample (without replacement) down to the long-tail
// profile. Throws naming the class when one has too few samples.
Dataset apply_long_tail(const Dataset& data, const LongTailSpec& spec,
                        std::uint64_t seed);

// Per-client example index lists into the partitioned dataset.
struct PartitionPlan {
  std::vector<std::vector<std::size_t>> client_indices;
  double dirichlet_concentration = 0.0;
  std::size_t client_count = 0;
};

// For each class, client proportions drawn from a symmetric Dirichlet and
// realized with largest-remainder rounding; disjoint and exhaustive. A draw
// that leaves any client empty is redone, up to 100 attempts.
PartitionPlan dirichlet_partition(const Dataset& data, std::size_t clients,
                                  double concentration, std::uint64_t seed);

// Class-balanced alignment set: exactly per_class seeded examples of every
// class from the (server-reserved) source.
Dataset build_alignment_set(const Dataset& data_source, std::size_t per_class,
                            std::uint64_t seed);

// --- IDX file loading --------------------------------------------------------

struct IdxError : std::runtime_error {
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  Kind kind;
  IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Big-endian IDX image/label pair (magic 0x00000803 / 0x00000801). Pixels are
// scaled to [0,1] and each image flattened to one feature vector.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace fedsim
