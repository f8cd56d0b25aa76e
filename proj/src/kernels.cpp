#include "fedsim/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedsim {

void parallel_for(std::size_t n, Execution exec,
                  const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }

  std::mutex err_mutex;
  std::size_t err_index = std::numeric_limits<std::size_t>::max();
  std::string err_message;

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    try {
      body(idx);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (idx < err_index) {
        err_index = idx;
        err_message = e.what();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (idx < err_index) {
        err_index = idx;
        err_message = "unknown error";
      }
    }
  }

  if (err_index != std::numeric_limits<std::size_t>::max())
    throw std::runtime_error(err_message);
}

BatchGrad batch_gradient(const MlpParams& params,
                         std::span<const std::size_t> examples,
                         const ExampleGradFn& fn, Execution exec) {
  if (examples.empty())
    throw std::invalid_argument("batch_gradient: empty batch");

  std::vector<ExampleLossGrad> slots(examples.size());
  parallel_for(examples.size(), exec,
               [&](std::size_t i) { slots[i] = fn(params, examples[i]); });

  // Fixed-order reduction: identical bits no matter how the fill ran.
  BatchGrad out;
  out.grad = zeros_like(params);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    out.mean_loss += slots[i].loss;
    add_scaled(out.grad, slots[i].grad, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(slots.size());
  out.mean_loss *= inv;
  scale(out.grad, inv);
  return out;
}

std::vector<std::int32_t> predict_labels(const MlpParams& params,
                                         const Dataset& data, Execution exec) {
  std::vector<std::int32_t> pred(data.size(), 0);
  parallel_for(data.size(), exec, [&](std::size_t i) {
    Vector logits = forward(params, data.example(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;  // strict: ties keep lowest index
    pred[i] = static_cast<std::int32_t>(best);
  });
  return pred;
}

std::size_t batches_per_epoch(std::size_t n_examples, std::size_t batch_size) {
  if (batch_size == 0)
    throw std::invalid_argument("batches_per_epoch: batch_size is 0");
  return (n_examples + batch_size - 1) / batch_size;
}

std::vector<double> sgd_train(MlpParams& params, std::size_t n_examples,
                              const ExampleGradFn& fn, const SgdConfig& cfg) {
  const std::string where = cfg.context.empty() ? "sgd_train" : cfg.context;
  if (n_examples == 0)
    throw std::invalid_argument(where + ": no training examples");
  if (cfg.batch_size == 0)
    throw std::invalid_argument(where + ": batch_size is 0");
  if (!std::isfinite(cfg.learning_rate) || cfg.learning_rate < 0.0)
    throw std::invalid_argument(where + ": bad learning rate");

  rng::Stream stream(cfg.seed);
  std::vector<std::size_t> order(n_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> epoch_losses;
  epoch_losses.reserve(cfg.epochs);
  std::size_t global_batch = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    stream.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_examples;
         start += cfg.batch_size, ++batch_index, ++global_batch) {
      const std::size_t len = std::min(cfg.batch_size, n_examples - start);
      if (cfg.on_batch) cfg.on_batch(epoch, batch_index, global_batch);
      BatchGrad bg = batch_gradient(
          params, std::span<const std::size_t>(order.data() + start, len), fn,
          cfg.exec);
      if (!std::isfinite(bg.mean_loss))
        throw std::runtime_error(where + ": non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      if (cfg.learning_rate != 0.0)
        apply_update(params, bg.grad, -cfg.learning_rate);
      loss_sum += bg.mean_loss * static_cast<double>(len);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(n_examples));
  }
  return epoch_losses;
}

}  // namespace fedsim
