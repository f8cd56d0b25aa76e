#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

// Every data-parallel loop runs in one of two modes. Both fill a per-example
// slot vector and then reduce it in fixed index order, so the two modes are
// bit-identical and the thread count never changes a result.
enum class Execution { serial, parallel };

// body(i) for i in [0, n). Slots written by body must be disjoint per index.
// In parallel mode exceptions are captured and the lowest-index failure is
// rethrown as std::runtime_error with the original message.
void parallel_for(std::size_t n, Execution exec,
                  const std::function<void(std::size_t)>& body);

// Per-example loss and parameter gradient at the current params.
struct ExampleLossGrad {
  double loss = 0.0;
  GradientRecord grad;
};

using ExampleGradFn =
    std::function<ExampleLossGrad(const MlpParams&, std::size_t example)>;

struct BatchGrad {
  double mean_loss = 0.0;
  GradientRecord grad;  // mean over the batch
};

// Mean loss and gradient over the given example indices. The per-example
// fill may run in parallel; the reduction is always the same fixed order.
BatchGrad batch_gradient(const MlpParams& params,
                         std::span<const std::size_t> examples,
                         const ExampleGradFn& fn, Execution exec);

// Argmax prediction per example, ties broken by lowest class index.
std::vector<std::int32_t> predict_labels(const MlpParams& params,
                                         const Dataset& data, Execution exec);

struct SgdConfig {
  std::size_t epochs = 1;
  double learning_rate = 0.0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
  // Prefixed to loop diagnostics so callers can attach round/client context.
  std::string context;
  // Called serially before each batch; lets callers retune per-batch state
  // (the pretraining mix factor) without racing the parallel fill.
  std::function<void(std::size_t epoch, std::size_t batch_in_epoch,
                     std::size_t global_batch)>
      on_batch;
};

// Mini-batch SGD: each epoch shuffles [0, n) with the stream seeded once from
// cfg.seed, walks consecutive batches, and applies params -= lr * mean grad.
// Returns the per-epoch mean example loss. Throws on a non-finite batch loss
// with epoch/batch context. The loop structure and stream consumption are
// shared by every trainer in this project, which is what makes the
// degenerate-case identities (zero KL weight vs plain CE, one-client
// federation vs centralized SGD) hold bit-for-bit.
std::vector<double> sgd_train(MlpParams& params, std::size_t n_examples,
                              const ExampleGradFn& fn, const SgdConfig& cfg);

// Batches per epoch under ceil division; shared so schedules can be sized.
std::size_t batches_per_epoch(std::size_t n_examples, std::size_t batch_size);

}  // namespace fedsim
