#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"

using namespace fedsim;

namespace {

// The single-node build runs on one core by default; force real threads so
// the parallel path is exercised rather than degenerating to serial.
void use_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

ExampleGradFn ce_grad_fn(const Dataset& data) {
  return [&data](const MlpParams& p, std::size_t i) {
    const auto x = data.example(i);
    const auto ce = cross_entropy(forward(p, x), std::size_t(data.labels[i]));
    return ExampleLossGrad{ce.value, backward(p, x, ce.grad)};
  };
}

bool grads_bitwise_equal(const GradientRecord& a, const GradientRecord& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.data != b.layers[i].weight.data) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("parallel_for fills identical slots in both modes") {
  use_threads(3);
  const std::size_t n = 1000;
  std::vector<double> serial(n, 0.0), parallel(n, 0.0);
  const auto fill = [](std::vector<double>& v) {
    return [&v](std::size_t i) { v[i] = std::sin(double(i)) * double(i); };
  };
  parallel_for(n, Execution::serial, fill(serial));
  parallel_for(n, Execution::parallel, fill(parallel));
  CHECK(serial == parallel);
}

TEST_CASE("parallel_for reports the lowest failing index") {
  use_threads(4);
  for (Execution exec : {Execution::serial, Execution::parallel}) {
    try {
      parallel_for(64, exec, [](std::size_t i) {
        if (i == 7 || i == 41) throw std::runtime_error("boom at " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "boom at 7");
    }
  }
}

TEST_CASE("parallel_for with zero iterations is a no-op") {
  bool touched = false;
  parallel_for(0, Execution::parallel, [&](std::size_t) { touched = true; });
  CHECK(!touched);
}

TEST_CASE("batch_gradient equals the hand mean of example gradients") {
  const auto data = generate_synthetic(3, 4, 10, 1.0, 7);
  rng::Stream ms(8);
  const auto p = make_mlp(4, {5}, 3, ms);
  const auto fn = ce_grad_fn(data);

  const std::vector<std::size_t> one = {4};
  const auto single = batch_gradient(p, one, fn, Execution::serial);
  const auto direct = fn(p, 4);
  CHECK(single.mean_loss == direct.loss);
  CHECK(grads_bitwise_equal(single.grad, direct.grad));

  const std::vector<std::size_t> two = {2, 9};
  const auto pair = batch_gradient(p, two, fn, Execution::serial);
  const auto a = fn(p, 2);
  const auto b = fn(p, 9);
  CHECK(std::fabs(pair.mean_loss - (a.loss + b.loss) / 2.0) < 1e-15);
  for (std::size_t li = 0; li < pair.grad.layers.size(); ++li) {
    const auto& got = pair.grad.layers[li];
    for (std::size_t k = 0; k < got.weight.data.size(); ++k) {
      const double want =
          (a.grad.layers[li].weight.data[k] + b.grad.layers[li].weight.data[k]) / 2.0;
      CHECK(std::fabs(got.weight.data[k] - want) < 1e-15);
    }
  }

  CHECK_THROWS_AS(
      (void)batch_gradient(p, std::vector<std::size_t>{}, fn, Execution::serial),
      std::invalid_argument);
}

TEST_CASE("batch_gradient is bit-identical across execution modes") {
  use_threads(3);
  const auto data = generate_synthetic(4, 6, 30, 1.5, 9);
  rng::Stream ms(10);
  const auto p = make_mlp(6, {8, 8}, 4, ms);
  const auto fn = ce_grad_fn(data);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  const auto s = batch_gradient(p, idx, fn, Execution::serial);
  const auto par = batch_gradient(p, idx, fn, Execution::parallel);
  CHECK(s.mean_loss == par.mean_loss);
  CHECK(grads_bitwise_equal(s.grad, par.grad));
}

TEST_CASE("predict_labels breaks ties toward the lowest class") {
  // Zero weights and bias make every logit equal.
  MlpParams p;
  p.layers.push_back(DenseLayer{Matrix(4, 3), Vector(4, 0.0), Activation::identity});
  const auto data = generate_synthetic(4, 3, 5, 1.0, 11);
  const auto pred = predict_labels(p, data, Execution::serial);
  for (auto y : pred) CHECK(y == 0);
}

TEST_CASE("predict_labels matches an independent argmax in both modes") {
  use_threads(2);
  const auto data = generate_synthetic(5, 4, 40, 2.0, 13);
  rng::Stream ms(14);
  const auto p = make_mlp(4, {6}, 5, ms);
  const auto serial = predict_labels(p, data, Execution::serial);
  const auto par = predict_labels(p, data, Execution::parallel);
  CHECK(serial == par);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = forward(p, data.example(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;
    CHECK(serial[i] == std::int32_t(best));
  }
}

TEST_CASE("sgd_train with zero learning rate leaves params untouched") {
  const auto data = generate_synthetic(3, 4, 20, 1.0, 15);
  rng::Stream ms(16);
  auto p = make_mlp(4, {5}, 3, ms);
  const MlpParams before = p;
  SgdConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 8;
  cfg.seed = 17;
  const auto losses = sgd_train(p, data.size(), ce_grad_fn(data), cfg);
  CHECK(bitwise_equal(p, before));
  REQUIRE(losses.size() == 3);
  // Same params every epoch, so every epoch sees the same mean loss.
  CHECK(std::fabs(losses[0] - losses[1]) < 1e-12);
  CHECK(std::fabs(losses[1] - losses[2]) < 1e-12);
}

TEST_CASE("sgd_train is reproducible from its seed") {
  const auto data = generate_synthetic(3, 4, 30, 1.0, 19);
  rng::Stream ms(20);
  const auto init = make_mlp(4, {5}, 3, ms);
  SgdConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 7;
  cfg.seed = 21;

  auto a = init;
  auto b = init;
  const auto la = sgd_train(a, data.size(), ce_grad_fn(data), cfg);
  const auto lb = sgd_train(b, data.size(), ce_grad_fn(data), cfg);
  CHECK(bitwise_equal(a, b));
  CHECK(la == lb);

  auto c = init;
  cfg.seed = 22;
  (void)sgd_train(c, data.size(), ce_grad_fn(data), cfg);
  CHECK(!bitwise_equal(a, c));
}

TEST_CASE("sgd_train is bit-identical across execution modes") {
  use_threads(3);
  const auto data = generate_synthetic(4, 5, 25, 1.2, 23);
  rng::Stream ms(24);
  const auto init = make_mlp(5, {6}, 4, ms);
  SgdConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 6;
  cfg.seed = 25;

  auto s = init;
  cfg.exec = Execution::serial;
  const auto ls = sgd_train(s, data.size(), ce_grad_fn(data), cfg);
  auto p = init;
  cfg.exec = Execution::parallel;
  const auto lp = sgd_train(p, data.size(), ce_grad_fn(data), cfg);
  CHECK(bitwise_equal(s, p));
  CHECK(ls == lp);
}

TEST_CASE("sgd_train walks ceil(n / batch) batches per epoch") {
  const auto data = generate_synthetic(2, 3, 10, 1.0, 27);  // 20 examples
  rng::Stream ms(28);
  auto p = make_mlp(3, {4}, 2, ms);
  SgdConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 7;  // 20 -> batches of 7, 7, 6
  cfg.seed = 29;
  std::vector<std::size_t> batch_ids;
  std::size_t max_epoch = 0;
  cfg.on_batch = [&](std::size_t epoch, std::size_t batch, std::size_t global) {
    batch_ids.push_back(global);
    max_epoch = std::max(max_epoch, epoch);
    CHECK(batch < batches_per_epoch(20, 7));
  };
  (void)sgd_train(p, data.size(), ce_grad_fn(data), cfg);
  CHECK(batches_per_epoch(20, 7) == 3);
  CHECK(batch_ids.size() == 6);
  for (std::size_t i = 0; i < batch_ids.size(); ++i) CHECK(batch_ids[i] == i);
  CHECK(max_epoch == 1);
  CHECK_THROWS_AS((void)batches_per_epoch(10, 0), std::invalid_argument);
}

TEST_CASE("sgd_train reports non-finite loss with its position and context") {
  const auto data = generate_synthetic(2, 3, 4, 1.0, 31);
  rng::Stream ms(32);
  auto p = make_mlp(3, {}, 2, ms);
  SgdConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 8;
  cfg.seed = 33;
  cfg.context = "round 3, client 5";
  const ExampleGradFn bad = [](const MlpParams& q, std::size_t) {
    return ExampleLossGrad{std::numeric_limits<double>::infinity(), zeros_like(q)};
  };
  try {
    (void)sgd_train(p, data.size(), bad, cfg);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("round 3, client 5") != std::string::npos);
    CHECK(msg.find("epoch 0") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
  }
}

TEST_CASE("sgd_train validates its arguments") {
  rng::Stream ms(34);
  auto p = make_mlp(3, {}, 2, ms);
  const ExampleGradFn fn = [](const MlpParams& q, std::size_t) {
    return ExampleLossGrad{0.0, zeros_like(q)};
  };
  SgdConfig cfg;
  CHECK_THROWS_AS((void)sgd_train(p, 0, fn, cfg), std::invalid_argument);
  cfg.batch_size = 0;
  CHECK_THROWS_AS((void)sgd_train(p, 5, fn, cfg), std::invalid_argument);
  cfg.batch_size = 2;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS((void)sgd_train(p, 5, fn, cfg), std::invalid_argument);
}
