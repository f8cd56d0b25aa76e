#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

using Vector = std::vector<double>;

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// y = M x
Vector matvec(const Matrix& m, std::span<const double> x);
// y = M^T x
Vector matvec_transpose(const Matrix& m, std::span<const double> x);

enum class Activation { identity, relu };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation act = Activation::identity;
};

// Feed-forward net: affine layers with the tagged activation applied after
// each one. Hidden layers use relu, the final layer must stay identity so
// forward() yields pre-activation logits or features.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
};

// Accumulated loss gradient, shape-identical to the MlpParams it derives from.
struct LayerGrad {
  Matrix weight;
  Vector bias;
};
struct GradientRecord {
  std::vector<LayerGrad> layers;
};

// Throws std::invalid_argument naming the first offending layer if layer
// dimensions do not chain or a non-final layer lacks matching shapes.
void check_chain(const MlpParams& params);

// He-initialised MLP: hidden layers relu, final layer identity.
MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t output_dim, rng::Stream& stream);

// Final-layer pre-activation for one input. Deterministic.
Vector forward(const MlpParams& params, std::span<const double> input);

// Exact reverse-mode gradient of forward w.r.t. every parameter, given the
// upstream gradient at the network output.
GradientRecord backward(const MlpParams& params, std::span<const double> input,
                        std::span<const double> upstream);

// Max-subtracted softmax. Entries positive, sum to 1.
Vector softmax(std::span<const double> logits);

struct LossGrad {
  double value = 0.0;
  Vector grad;
};

// loss = -log softmax(logits)[label]; grad = softmax(logits) - one_hot(label)
LossGrad cross_entropy(std::span<const double> logits, std::size_t label);

// KL(softmax(q) || softmax(p)); gradient is w.r.t. p only (q side is frozen).
LossGrad kl_divergence(std::span<const double> q_logits,
                       std::span<const double> p_logits);

// --- parameter/gradient arithmetic -----------------------------------------

GradientRecord zeros_like(const MlpParams& params);
void add_scaled(GradientRecord& acc, const GradientRecord& g, double a);
void scale(GradientRecord& g, double a);
// params += step * grad  (SGD uses step = -learning_rate)
void apply_update(MlpParams& params, const GradientRecord& grad, double step);

bool same_shape(const MlpParams& a, const MlpParams& b);
bool bitwise_equal(const MlpParams& a, const MlpParams& b);
bool all_finite(const MlpParams& params);

// Per-parameter weighted sum over shape-identical models. Accumulation order
// is the list order, so results are reproducible.
MlpParams weighted_sum(const std::vector<MlpParams>& models,
                       const std::vector<double>& weights);

}  // namespace fedsim
