#include "fedsim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace fedsim {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::int32_t l : labels) counts[static_cast<std::size_t>(l)]++;
  return counts;
}

void Dataset::validate() const {
  if (feature_dim == 0) throw std::invalid_argument("Dataset: feature_dim is 0");
  if (features.size() != labels.size() * feature_dim)
    throw std::invalid_argument("Dataset: feature storage size " +
                                std::to_string(features.size()) +
                                " != examples * feature_dim");
  if (origin.size() != labels.size())
    throw std::invalid_argument("Dataset: origin size mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 ||
        static_cast<std::size_t>(labels[i]) >= num_classes)
      throw std::invalid_argument("Dataset: label " + std::to_string(labels[i]) +
                                  " at example " + std::to_string(i) +
                                  " out of range [0, " +
                                  std::to_string(num_classes) + ")");
  }
  for (double x : features)
    if (!std::isfinite(x))
      throw std::invalid_argument("Dataset: non-finite feature value");
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.feature_dim = data.feature_dim;
  out.num_classes = data.num_classes;
  out.features.reserve(indices.size() * data.feature_dim);
  out.labels.reserve(indices.size());
  out.origin.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= data.size())
      throw std::invalid_argument("subset: index " + std::to_string(idx) +
                                  " out of range");
    auto ex = data.example(idx);
    out.features.insert(out.features.end(), ex.begin(), ex.end());
    out.labels.push_back(data.labels[idx]);
    out.origin.push_back(data.origin[idx]);
  }
  return out;
}

Dataset generate_synthetic(std::size_t num_classes, std::size_t feature_dim,
                           std::size_t n_per_class, double class_separation,
                           std::uint64_t seed) {
  if (num_classes < 2)
    throw std::invalid_argument("generate_synthetic: need at least 2 classes");
  if (feature_dim < 1)
    throw std::invalid_argument("generate_synthetic: feature_dim must be >= 1");
  if (n_per_class == 0)
    throw std::invalid_argument("generate_synthetic: n_per_class is 0");
  if (class_separation < 0.0)
    throw std::invalid_argument("generate_synthetic: negative class_separation");

  rng::Stream stream(seed);
  // Class means first, so example draws do not shift them.
  std::vector<double> means(num_classes * feature_dim);
  for (double& m : means) m = class_separation * stream.normal();

  Dataset out;
  out.feature_dim = feature_dim;
  out.num_classes = num_classes;
  out.features.reserve(num_classes * n_per_class * feature_dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t j = 0; j < feature_dim; ++j)
        out.features.push_back(means[k * feature_dim + j] + stream.normal());
      out.labels.push_back(static_cast<std::int32_t>(k));
    }
  }
  out.origin.resize(out.labels.size());
  std::iota(out.origin.begin(), out.origin.end(), std::size_t{0});
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by_class;
}

// Seeded per-class pick of `want[k]` indices; remainder goes to `rest`.
std::pair<Dataset, Dataset> split_by_class_counts(
    const Dataset& data, const std::vector<std::size_t>& want,
    std::uint64_t seed, const char* who) {
  auto by_class = indices_by_class(data);
  rng::Stream stream(seed);
  std::vector<std::size_t> taken, rest;
  for (std::size_t k = 0; k < data.num_classes; ++k) {
    auto& pool = by_class[k];
    if (pool.size() < want[k])
      throw std::invalid_argument(std::string(who) + ": class " +
                                  std::to_string(k) + " has " +
                                  std::to_string(pool.size()) +
                                  " samples, needs " + std::to_string(want[k]));
    stream.shuffle(pool);
    for (std::size_t i = 0; i < pool.size(); ++i)
      (i < want[k] ? taken : rest).push_back(pool[i]);
  }
  std::sort(taken.begin(), taken.end());
  std::sort(rest.begin(), rest.end());
  return {subset(data, taken), subset(data, rest)};
}

}  // namespace

std::pair<Dataset, Dataset> take_per_class(const Dataset& data,
                                           std::size_t per_class,
                                           std::uint64_t seed) {
  std::vector<std::size_t> want(data.num_classes, per_class);
  return split_by_class_counts(data, want, seed, "take_per_class");
}

std::pair<Dataset, Dataset> split_fraction(const Dataset& data, double fraction,
                                           std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("split_fraction: fraction outside [0,1]");
  auto counts = data.class_counts();
  std::vector<std::size_t> want(data.num_classes);
  for (std::size_t k = 0; k < data.num_classes; ++k)
    want[k] = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(counts[k]) + 1e-9));
  return split_by_class_counts(data, want, seed, "split_fraction");
}

std::vector<std::size_t> long_tail_targets(const LongTailSpec& spec,
                                           std::size_t num_classes) {
  if (spec.imbalance_factor < 1.0)
    throw std::invalid_argument("long_tail_targets: imbalance factor must be >= 1");
  if (spec.max_per_class == 0)
    throw std::invalid_argument("long_tail_targets: max_per_class is 0");
  std::vector<std::size_t> targets(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    double exponent =
        num_classes > 1
            ? static_cast<double>(k) / static_cast<double>(num_classes - 1)
            : 0.0;
    // Small nudge tolerates pow() rounding at exact-integer profile points.
    double raw = static_cast<double>(spec.max_per_class) *
                 std::pow(spec.imbalance_factor, -exponent);
    targets[k] = static_cast<std::size_t>(std::floor(raw + 1e-9));
  }
  return targets;
}

Dataset apply_long_tail(const Dataset& data, const LongTailSpec& spec,
                        std::uint64_t seed) {
  auto targets = long_tail_targets(spec, data.num_classes);
  auto counts = data.class_counts();
  rng::Stream stream(seed);
  auto by_class = indices_by_class(data);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < data.num_classes; ++k) {
    if (targets[k] == 0)
      throw std::invalid_argument("apply_long_tail: class " + std::to_string(k) +
                                  " target count is 0; lower the imbalance "
                                  "factor or raise max_per_class");
    if (counts[k] < targets[k])
      throw std::invalid_argument("apply_long_tail: class " + std::to_string(k) +
                                  " has " + std::to_string(counts[k]) +
                                  " samples, needs " +
                                  std::to_string(targets[k]));
    auto picks = stream.sample_without_replacement(counts[k], targets[k]);
    for (std::size_t p : picks) keep.push_back(by_class[k][p]);
  }
  std::sort(keep.begin(), keep.end());
  return subset(data, keep);
}

PartitionPlan dirichlet_partition(const Dataset& data, std::size_t clients,
                                  double concentration, std::uint64_t seed) {
  if (clients < 1)
    throw std::invalid_argument("dirichlet_partition: need at least 1 client");
  if (!(concentration > 0.0))
    throw std::invalid_argument("dirichlet_partition: concentration must be > 0");
  if (data.size() == 0)
    throw std::invalid_argument("dirichlet_partition: empty dataset");

  rng::Stream stream(seed);
  auto by_class = indices_by_class(data);

  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    PartitionPlan plan;
    plan.client_indices.assign(clients, {});
    plan.dirichlet_concentration = concentration;
    plan.client_count = clients;

    for (std::size_t k = 0; k < data.num_classes; ++k) {
      auto pool = by_class[k];
      if (pool.empty()) continue;
      stream.shuffle(pool);
      std::vector<double> props = stream.dirichlet(concentration, clients);

      // Largest-remainder rounding of proportion * class size.
      const std::size_t n_k = pool.size();
      std::vector<std::size_t> quota(clients);
      std::vector<std::pair<double, std::size_t>> remainders(clients);
      std::size_t assigned = 0;
      for (std::size_t c = 0; c < clients; ++c) {
        double exact = props[c] * static_cast<double>(n_k);
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainders[c] = {exact - std::floor(exact), c};
        assigned += quota[c];
      }
      std::sort(remainders.begin(), remainders.end(),
                [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second < b.second;
                });
      for (std::size_t r = 0; r < n_k - assigned; ++r)
        quota[remainders[r % clients].second]++;

      std::size_t pos = 0;
      for (std::size_t c = 0; c < clients; ++c)
        for (std::size_t i = 0; i < quota[c]; ++i)
          plan.client_indices[c].push_back(pool[pos++]);
    }

    bool any_empty = false;
    for (const auto& shard : plan.client_indices)
      if (shard.empty()) any_empty = true;
    if (any_empty) continue;  // redraw; degenerate shards break size weighting

    for (auto& shard : plan.client_indices)
      std::sort(shard.begin(), shard.end());
    return plan;
  }
  throw std::runtime_error(
      "dirichlet_partition: a client received no samples in 100 consecutive "
      "draws; dataset too small for " +
      std::to_string(clients) + " clients at concentration " +
      std::to_string(concentration));
}

Dataset build_alignment_set(const Dataset& data_source, std::size_t per_class,
                            std::uint64_t seed) {
  if (per_class == 0)
    throw std::invalid_argument("build_alignment_set: per_class is 0");
  std::vector<std::size_t> want(data_source.num_classes, per_class);
  return split_by_class_counts(data_source, want, seed, "build_alignment_set")
      .first;
}

// --- IDX ---------------------------------------------------------------------

namespace {

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw IdxError(IdxError::Kind::truncated, "idx: " + path + " truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img)
    throw IdxError(IdxError::Kind::io, "idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab)
    throw IdxError(IdxError::Kind::io, "idx: cannot open " + labels_path);

  const std::uint32_t img_magic = read_u32_be(img, images_path);
  if (img_magic != 0x00000803u)
    throw IdxError(IdxError::Kind::bad_magic,
                   "idx: " + images_path + " has magic " +
                       std::to_string(img_magic) + ", expected 2051");
  const std::uint32_t n_images = read_u32_be(img, images_path);
  const std::uint32_t rows = read_u32_be(img, images_path);
  const std::uint32_t cols = read_u32_be(img, images_path);

  const std::uint32_t lab_magic = read_u32_be(lab, labels_path);
  if (lab_magic != 0x00000801u)
    throw IdxError(IdxError::Kind::bad_magic,
                   "idx: " + labels_path + " has magic " +
                       std::to_string(lab_magic) + ", expected 2049");
  const std::uint32_t n_labels = read_u32_be(lab, labels_path);

  if (n_images != n_labels)
    throw IdxError(IdxError::Kind::count_mismatch,
                   "idx: " + std::to_string(n_images) + " images vs " +
                       std::to_string(n_labels) + " labels");

  const std::size_t dim = std::size_t(rows) * std::size_t(cols);
  if (dim == 0)
    throw IdxError(IdxError::Kind::truncated,
                   "idx: " + images_path + " has zero image dimensions");

  std::vector<unsigned char> pixels(std::size_t(n_images) * dim);
  img.read(reinterpret_cast<char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(img.gcount()) != pixels.size())
    throw IdxError(IdxError::Kind::truncated,
                   "idx: " + images_path + " truncated pixel data");

  std::vector<unsigned char> raw_labels(n_labels);
  lab.read(reinterpret_cast<char*>(raw_labels.data()),
           static_cast<std::streamsize>(raw_labels.size()));
  if (static_cast<std::size_t>(lab.gcount()) != raw_labels.size())
    throw IdxError(IdxError::Kind::truncated,
                   "idx: " + labels_path + " truncated label data");

  Dataset out;
  out.feature_dim = dim;
  out.features.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out.features[i] = static_cast<double>(pixels[i]) / 255.0;
  out.labels.resize(n_labels);
  std::int32_t max_label = 0;
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    out.labels[i] = static_cast<std::int32_t>(raw_labels[i]);
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  out.origin.resize(out.labels.size());
  std::iota(out.origin.begin(), out.origin.end(), std::size_t{0});
  return out;
}

}  // namespace fedsim
