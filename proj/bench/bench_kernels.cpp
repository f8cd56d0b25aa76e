// Serial versus OpenMP execution of the hot kernels, on workloads shaped
// like the simulator's own stages. Run with --benchmark_min_time=0.05 for a
// quick look; the defaults give steadier numbers.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

constexpr std::size_t kClasses = 10;
constexpr std::size_t kFeatureDim = 16;

struct Workload {
  Dataset data;
  MlpParams params;
  std::vector<std::size_t> batch;

  Workload(std::size_t per_class, std::size_t batch_size) {
    data = generate_synthetic(kClasses, kFeatureDim, per_class, 2.0, 71);
    rng::Stream s(72);
    params = make_mlp(kFeatureDim, {32}, kClasses, s);
    batch.resize(std::min(batch_size, data.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  }
};

ExampleLossGrad loss_on(const MlpParams& p, const Dataset& d, std::size_t i) {
  const auto logits = forward(p, d.example(i));
  const LossGrad ce = cross_entropy(logits, std::size_t(d.labels[i]));
  ExampleLossGrad out;
  out.loss = ce.value;
  out.grad = backward(p, d.example(i), ce.grad);
  return out;
}

void bench_batch_gradient(benchmark::State& state, Execution exec) {
  Workload w(200, static_cast<std::size_t>(state.range(0)));
  auto fn = [&w](const MlpParams& p, std::size_t i) {
    return loss_on(p, w.data, i);
  };
  for (auto _ : state) {
    auto grad = batch_gradient(w.params, w.batch, fn, exec);
    benchmark::DoNotOptimize(grad.mean_loss);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(w.batch.size()));
}

void bench_predict_labels(benchmark::State& state, Execution exec) {
  Workload w(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    auto labels = predict_labels(w.params, w.data, exec);
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(w.data.size()));
}

void bench_federated_round(benchmark::State& state, Execution exec) {
  Workload w(100, 1);
  const PartitionPlan plan = dirichlet_partition(w.data, 8, 1.0, 73);
  FedConfig cfg;
  cfg.clients = 8;
  cfg.participation_fraction = 1.0;
  cfg.rounds = 1;
  cfg.local_epochs = 1;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 32;
  cfg.seed = 74;
  cfg.exec = exec;
  for (auto _ : state) {
    auto fed = run_federated(w.params, cfg, plan, w.data);
    benchmark::DoNotOptimize(fed.params.layers.front().bias.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_batch_gradient, serial, Execution::serial)
    ->Arg(64)
    ->Arg(512);
BENCHMARK_CAPTURE(bench_batch_gradient, parallel, Execution::parallel)
    ->Arg(64)
    ->Arg(512);

BENCHMARK_CAPTURE(bench_predict_labels, serial, Execution::serial)
    ->Arg(100)
    ->Arg(500);
BENCHMARK_CAPTURE(bench_predict_labels, parallel, Execution::parallel)
    ->Arg(100)
    ->Arg(500);

BENCHMARK_CAPTURE(bench_federated_round, serial, Execution::serial);
BENCHMARK_CAPTURE(bench_federated_round, parallel, Execution::parallel);

BENCHMARK_MAIN();
