#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsim::rng {

// splitmix64 finalizer; used to derive independent sub-stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named sub-stream derivation. Every consumer of randomness seeds its own
// stream via derive_seed(root, stage[, index[, index]]), so enabling or
// disabling one pipeline stage never shifts the draws of another.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(base ^ mix64(tag));
}
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t a) {
  return derive_seed(derive_seed(base, tag), a);
}
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(derive_seed(base, tag), a), b);
}

// Stage tags for sub-stream derivation.
namespace stage {
inline constexpr std::uint64_t synth = 1;
inline constexpr std::uint64_t splits = 2;
inline constexpr std::uint64_t long_tail = 3;
inline constexpr std::uint64_t partition = 4;
inline constexpr std::uint64_t align_set = 5;
inline constexpr std::uint64_t teacher = 6;
inline constexpr std::uint64_t frozen_head = 7;
inline constexpr std::uint64_t student_init = 8;
inline constexpr std::uint64_t pretrain = 9;
inline constexpr std::uint64_t classifier_init = 10;
inline constexpr std::uint64_t federated = 11;
inline constexpr std::uint64_t align = 12;
}  // namespace stage

// Seeded random stream. The engine is std::mt19937_64 (bit-exact by the
// standard); the distributions are implemented here rather than taken from
// <random> because the standard leaves distribution algorithms
// implementation-defined and this project freezes seeded outputs in tests.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (no cached spare).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

  // Symmetric Dirichlet over n components with the given concentration.
  std::vector<double> dirichlet(double concentration, std::size_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // k distinct indices sampled uniformly from [0, n), returned sorted.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedsim::rng
