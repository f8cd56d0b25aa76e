#include "fedsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedsim {

Vector matvec(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.cols)
    throw std::invalid_argument("matvec: expected input of length " +
                                std::to_string(m.cols) + ", got " +
                                std::to_string(x.size()));
  Vector y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector matvec_transpose(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.rows)
    throw std::invalid_argument("matvec_transpose: expected input of length " +
                                std::to_string(m.rows) + ", got " +
                                std::to_string(x.size()));
  Vector y(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
  return y;
}

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols;
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows;
}

void check_chain(const MlpParams& params) {
  if (params.layers.empty())
    throw std::invalid_argument("check_chain: model has no layers");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& l = params.layers[i];
    if (l.weight.data.size() != l.weight.rows * l.weight.cols)
      throw std::invalid_argument("check_chain: layer " + std::to_string(i) +
                                  " weight storage does not match dims");
    if (l.bias.size() != l.weight.rows)
      throw std::invalid_argument("check_chain: layer " + std::to_string(i) +
                                  " bias length " + std::to_string(l.bias.size()) +
                                  " != rows " + std::to_string(l.weight.rows));
    if (i + 1 < params.layers.size() &&
        params.layers[i + 1].weight.cols != l.weight.rows)
      throw std::invalid_argument(
          "check_chain: layer " + std::to_string(i + 1) + " input dim " +
          std::to_string(params.layers[i + 1].weight.cols) +
          " != layer " + std::to_string(i) + " output dim " +
          std::to_string(l.weight.rows));
  }
  if (params.layers.back().act != Activation::identity)
    throw std::invalid_argument("check_chain: final layer must be identity");
}

MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t output_dim, rng::Stream& stream) {
  if (input_dim == 0 || output_dim == 0)
    throw std::invalid_argument("make_mlp: zero dimension");
  MlpParams params;
  std::size_t in = input_dim;
  auto push_layer = [&](std::size_t out, Activation act) {
    DenseLayer l;
    l.weight = Matrix(out, in);
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : l.weight.data) w = sd * stream.normal();
    l.bias.assign(out, 0.0);
    l.act = act;
    params.layers.push_back(std::move(l));
    in = out;
  };
  for (std::size_t h : hidden) push_layer(h, Activation::relu);
  push_layer(output_dim, Activation::identity);
  return params;
}

namespace {

void apply_activation(Vector& v, Activation act) {
  if (act == Activation::relu)
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

Vector forward(const MlpParams& params, std::span<const double> input) {
  if (params.layers.empty())
    throw std::invalid_argument("forward: model has no layers");
  Vector cur;
  std::span<const double> x = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& l = params.layers[i];
    if (x.size() != l.weight.cols)
      throw std::invalid_argument("forward: layer " + std::to_string(i) +
                                  " expects input of length " +
                                  std::to_string(l.weight.cols) + ", got " +
                                  std::to_string(x.size()));
    Vector next = matvec(l.weight, x);
    for (std::size_t r = 0; r < next.size(); ++r) next[r] += l.bias[r];
    if (i + 1 < params.layers.size()) apply_activation(next, l.act);
    cur = std::move(next);
    x = cur;
  }
  return cur;
}

GradientRecord backward(const MlpParams& params, std::span<const double> input,
                        std::span<const double> upstream) {
  const std::size_t n_layers = params.layers.size();
  if (n_layers == 0)
    throw std::invalid_argument("backward: model has no layers");
  if (upstream.size() != params.output_dim())
    throw std::invalid_argument("backward: upstream length " +
                                std::to_string(upstream.size()) +
                                " != output dim " +
                                std::to_string(params.output_dim()));

  // Forward pass, keeping each layer's post-activation output.
  std::vector<Vector> outputs(n_layers);  // outputs[i] = activation(pre_i)
  std::span<const double> x = input;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const DenseLayer& l = params.layers[i];
    if (x.size() != l.weight.cols)
      throw std::invalid_argument("backward: layer " + std::to_string(i) +
                                  " expects input of length " +
                                  std::to_string(l.weight.cols) + ", got " +
                                  std::to_string(x.size()));
    Vector pre = matvec(l.weight, x);
    for (std::size_t r = 0; r < pre.size(); ++r) pre[r] += l.bias[r];
    if (i + 1 < n_layers) apply_activation(pre, l.act);
    outputs[i] = std::move(pre);
    x = outputs[i];
  }

  GradientRecord grad = zeros_like(params);
  Vector delta(upstream.begin(), upstream.end());
  for (std::size_t ii = n_layers; ii-- > 0;) {
    const DenseLayer& l = params.layers[ii];
    // relu was applied to outputs[ii] itself, so the stored value tells us
    // which units were clamped.
    if (ii + 1 < n_layers && l.act == Activation::relu) {
      for (std::size_t r = 0; r < delta.size(); ++r)
        if (outputs[ii][r] <= 0.0) delta[r] = 0.0;
    }
    std::span<const double> layer_in =
        ii == 0 ? input : std::span<const double>(outputs[ii - 1]);
    LayerGrad& lg = grad.layers[ii];
    for (std::size_t r = 0; r < l.weight.rows; ++r) {
      const double d = delta[r];
      double* grow = lg.weight.data.data() + r * l.weight.cols;
      for (std::size_t c = 0; c < l.weight.cols; ++c) grow[c] = d * layer_in[c];
      lg.bias[r] = d;
    }
    if (ii > 0) delta = matvec_transpose(l.weight, delta);
  }
  return grad;
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(mx))
    throw std::invalid_argument("softmax: non-finite logits");
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

namespace {

// log softmax via the same max-subtraction, shared by CE and KL.
Vector log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace

LossGrad cross_entropy(std::span<const double> logits, std::size_t label) {
  if (logits.empty()) throw std::invalid_argument("cross_entropy: empty logits");
  if (label >= logits.size())
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(logits.size()) + " classes");
  Vector ls = log_softmax(logits);
  LossGrad out;
  out.value = -ls[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(ls[i]);
  out.grad[label] -= 1.0;
  return out;
}

LossGrad kl_divergence(std::span<const double> q_logits,
                       std::span<const double> p_logits) {
  if (q_logits.size() != p_logits.size())
    throw std::invalid_argument("kl_divergence: length mismatch, q has " +
                                std::to_string(q_logits.size()) + ", p has " +
                                std::to_string(p_logits.size()));
  if (q_logits.empty()) throw std::invalid_argument("kl_divergence: empty input");
  Vector lq = log_softmax(q_logits);
  Vector lp = log_softmax(p_logits);
  LossGrad out;
  out.grad.resize(p_logits.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < q_logits.size(); ++i) {
    const double q = std::exp(lq[i]);
    kl += q * (lq[i] - lp[i]);
    out.grad[i] = std::exp(lp[i]) - q;  // d KL / d p_logits
  }
  out.value = kl < 0.0 ? 0.0 : kl;  // clamp tiny negative rounding residue
  return out;
}

GradientRecord zeros_like(const MlpParams& params) {
  GradientRecord g;
  g.layers.reserve(params.layers.size());
  for (const DenseLayer& l : params.layers) {
    LayerGrad lg;
    lg.weight = Matrix(l.weight.rows, l.weight.cols);
    lg.bias.assign(l.bias.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  return g;
}

void add_scaled(GradientRecord& acc, const GradientRecord& g, double a) {
  if (acc.layers.size() != g.layers.size())
    throw std::invalid_argument("add_scaled: layer count mismatch");
  for (std::size_t i = 0; i < acc.layers.size(); ++i) {
    LayerGrad& dst = acc.layers[i];
    const LayerGrad& src = g.layers[i];
    if (dst.weight.data.size() != src.weight.data.size() ||
        dst.bias.size() != src.bias.size())
      throw std::invalid_argument("add_scaled: shape mismatch at layer " +
                                  std::to_string(i));
    for (std::size_t k = 0; k < dst.weight.data.size(); ++k)
      dst.weight.data[k] += a * src.weight.data[k];
    for (std::size_t k = 0; k < dst.bias.size(); ++k)
      dst.bias[k] += a * src.bias[k];
  }
}

void scale(GradientRecord& g, double a) {
  for (LayerGrad& l : g.layers) {
    for (double& x : l.weight.data) x *= a;
    for (double& x : l.bias) x *= a;
  }
}

void apply_update(MlpParams& params, const GradientRecord& grad, double step) {
  if (params.layers.size() != grad.layers.size())
    throw std::invalid_argument("apply_update: layer count mismatch");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    DenseLayer& l = params.layers[i];
    const LayerGrad& g = grad.layers[i];
    if (l.weight.data.size() != g.weight.data.size() ||
        l.bias.size() != g.bias.size())
      throw std::invalid_argument("apply_update: shape mismatch at layer " +
                                  std::to_string(i));
    for (std::size_t k = 0; k < l.weight.data.size(); ++k)
      l.weight.data[k] += step * g.weight.data[k];
    for (std::size_t k = 0; k < l.bias.size(); ++k)
      l.bias[k] += step * g.bias[k];
  }
}

bool same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.rows != b.layers[i].weight.rows ||
        a.layers[i].weight.cols != b.layers[i].weight.cols ||
        a.layers[i].bias.size() != b.layers[i].bias.size() ||
        a.layers[i].act != b.layers[i].act)
      return false;
  }
  return true;
}

bool bitwise_equal(const MlpParams& a, const MlpParams& b) {
  if (!same_shape(a, b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.data != b.layers[i].weight.data) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

bool all_finite(const MlpParams& params) {
  for (const DenseLayer& l : params.layers) {
    for (double x : l.weight.data)
      if (!std::isfinite(x)) return false;
    for (double x : l.bias)
      if (!std::isfinite(x)) return false;
  }
  return true;
}

MlpParams weighted_sum(const std::vector<MlpParams>& models,
                       const std::vector<double>& weights) {
  if (models.empty())
    throw std::invalid_argument("weighted_sum: empty model list");
  if (models.size() != weights.size())
    throw std::invalid_argument("weighted_sum: " + std::to_string(models.size()) +
                                " models vs " + std::to_string(weights.size()) +
                                " weights");
  for (std::size_t i = 1; i < models.size(); ++i)
    if (!same_shape(models[0], models[i]))
      throw std::invalid_argument("weighted_sum: model " + std::to_string(i) +
                                  " shape differs from model 0");
  // Start from w0 * m0 so a single entry with weight 1 reproduces it exactly.
  MlpParams out = models[0];
  for (DenseLayer& l : out.layers) {
    for (double& x : l.weight.data) x *= weights[0];
    for (double& x : l.bias) x *= weights[0];
  }
  for (std::size_t i = 1; i < models.size(); ++i) {
    const double w = weights[i];
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
      DenseLayer& dst = out.layers[li];
      const DenseLayer& src = models[i].layers[li];
      for (std::size_t k = 0; k < dst.weight.data.size(); ++k)
        dst.weight.data[k] += w * src.weight.data[k];
      for (std::size_t k = 0; k < dst.bias.size(); ++k)
        dst.bias[k] += w * src.bias[k];
    }
  }
  return out;
}

}  // namespace fedsim
