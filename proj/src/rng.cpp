#include "fedsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fedsim::rng {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::uint64_t Stream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
  // Rejection sampling to remove modulo bias.
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t reject = (max % n + 1) % n;
  std::uint64_t v = eng_();
  while (reject != 0 && v > max - reject) v = eng_();
  return v % n;
}

double Stream::normal() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Stream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform();
    while (u <= 0.0) u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Stream::dirichlet(double concentration, std::size_t n) {
  if (!(concentration > 0.0))
    throw std::invalid_argument("dirichlet: concentration must be > 0");
  if (n == 0) throw std::invalid_argument("dirichlet: n must be > 0");
  std::vector<double> g(n);
  double sum = 0.0;
  do {
    sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = gamma(concentration);
      sum += g[i];
    }
  } while (!(sum > 0.0));
  for (double& x : g) x /= sum;
  return g;
}

std::vector<std::size_t> Stream::sample_without_replacement(std::size_t n,
                                                            std::size_t k) {
  if (k > n)
    throw std::invalid_argument("sample_without_replacement: k exceeds n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: first k slots end up holding the sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace fedsim::rng
