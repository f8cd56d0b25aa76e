#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fd_oracle.hpp"
#include "fedsim/datagen.hpp"
#include "fedsim/fedcore.hpp"

using namespace fedsim;

namespace {

void use_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// One-parameter scalar model so aggregation arithmetic is readable.
MlpParams scalar_model(double v) {
  MlpParams p;
  Matrix w(1, 1);
  w.data = {v};
  p.layers.push_back(DenseLayer{w, Vector{0.0}, Activation::identity});
  return p;
}

struct FedFixture {
  Dataset data;
  Dataset test;
  PartitionPlan plan;
  MlpParams init;
};

FedFixture make_fed_fixture(std::uint64_t seed, std::size_t clients,
                            double concentration) {
  FedFixture f;
  const auto all = generate_synthetic(4, 5, 120, 3.0, seed);
  auto [test, rest] = take_per_class(all, 30, seed + 1);
  f.test = std::move(test);
  f.data = std::move(rest);
  f.plan = dirichlet_partition(f.data, clients, concentration, seed + 2);
  rng::Stream s(seed + 3);
  f.init = make_mlp(5, {8}, 4, s);
  return f;
}

}  // namespace

TEST_CASE("full participation selects every client") {
  const auto sel = select_clients(12, 1.0, 99);
  std::vector<std::size_t> expect(12);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(sel == expect);
}

TEST_CASE("twenty clients at forty percent yield exactly eight") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto sel = select_clients(20, 0.4, seed);
    CHECK(sel.size() == 8);
    CHECK(std::is_sorted(sel.begin(), sel.end()));
    CHECK(std::set<std::size_t>(sel.begin(), sel.end()).size() == 8);
    for (auto id : sel) CHECK(id < 20);
  }
}

TEST_CASE("selection count is the ceiling with a floor of one") {
  CHECK(select_clients(20, 0.05, 1).size() == 1);
  CHECK(select_clients(20, 0.01, 1).size() == 1);  // clamped up to 1
  CHECK(select_clients(10, 0.25, 1).size() == 3);  // ceil(2.5)
  CHECK(select_clients(3, 0.34, 1).size() == 2);   // ceil(1.02)
  CHECK_THROWS_AS((void)select_clients(0, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)select_clients(5, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)select_clients(5, 1.5, 1), std::invalid_argument);
}

TEST_CASE("selection frequencies are uniform across rounds") {
  // 10000 rounds of 8-of-20: each client expects 4000 hits, binomial
  // sd = sqrt(10000 * 0.4 * 0.6) = 49.
  const std::size_t rounds = 10000;
  std::vector<std::size_t> hits(20, 0);
  for (std::size_t t = 0; t < rounds; ++t)
    for (auto id : select_clients(20, 0.4, selection_seed(7, t))) hits[id]++;
  const double sd = std::sqrt(10000.0 * 0.4 * 0.6);
  for (auto h : hits) CHECK(std::fabs(double(h) - 4000.0) < 4.0 * sd);
}

TEST_CASE("consecutive rounds draw different client sets") {
  bool any_differ = false;
  const auto first = select_clients(20, 0.4, selection_seed(11, 0));
  for (std::size_t t = 1; t < 5 && !any_differ; ++t)
    any_differ = select_clients(20, 0.4, selection_seed(11, t)) != first;
  CHECK(any_differ);
}

TEST_CASE("local update with zero learning rate is the identity") {
  const auto f = make_fed_fixture(400, 4, 1.0);
  const auto shard = subset(f.data, f.plan.client_indices[0]);
  const auto out = local_update(f.init, shard, 3, 0.0, 16, 401);
  CHECK(bitwise_equal(out, f.init));
}

TEST_CASE("a single local step descends along the batch gradient") {
  const auto f = make_fed_fixture(410, 4, 1.0);
  const auto shard = subset(f.data, f.plan.client_indices[1]);
  const double lr = 0.05;
  // One epoch, full-shard batch: exactly one SGD step from the start params.
  const auto out = local_update(f.init, shard, 1, lr, shard.size(), 411);

  // Replica of that step through the public pieces.
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::Stream stream(411);
  stream.shuffle(order);
  const ExampleGradFn fn = [&shard](const MlpParams& p, std::size_t i) {
    const auto x = shard.example(i);
    const auto ce = cross_entropy(forward(p, x), std::size_t(shard.labels[i]));
    return ExampleLossGrad{ce.value, backward(p, x, ce.grad)};
  };
  const auto bg = batch_gradient(f.init, order, fn, Execution::serial);
  MlpParams expect = f.init;
  apply_update(expect, bg.grad, -lr);
  CHECK(bitwise_equal(out, expect));
}

TEST_CASE("five epochs of local training do not raise the mean loss") {
  const auto f = make_fed_fixture(420, 4, 1.0);
  const auto shard = subset(f.data, f.plan.client_indices[2]);
  const ExampleGradFn fn = [&shard](const MlpParams& p, std::size_t i) {
    const auto x = shard.example(i);
    const auto ce = cross_entropy(forward(p, x), std::size_t(shard.labels[i]));
    return ExampleLossGrad{ce.value, backward(p, x, ce.grad)};
  };
  std::vector<std::size_t> all(shard.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const double before =
      batch_gradient(f.init, all, fn, Execution::serial).mean_loss;
  const auto trained = local_update(f.init, shard, 5, 0.01, 16, 421);
  const double after =
      batch_gradient(trained, all, fn, Execution::serial).mean_loss;
  CHECK(after <= before);
}

TEST_CASE("local update gradient step matches finite differences") {
  const auto f = make_fed_fixture(430, 4, 1.0);
  const auto shard = subset(f.data, f.plan.client_indices[0]);
  std::vector<std::size_t> all(shard.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const ExampleGradFn fn = [&shard](const MlpParams& p, std::size_t i) {
    const auto x = shard.example(i);
    const auto ce = cross_entropy(forward(p, x), std::size_t(shard.labels[i]));
    return ExampleLossGrad{ce.value, backward(p, x, ce.grad)};
  };
  const auto bg = batch_gradient(f.init, all, fn, Execution::serial);
  const auto fd = fedsim::test::fd_gradient(f.init, [&](const MlpParams& p) {
    return batch_gradient(p, all, fn, Execution::serial).mean_loss;
  });
  CHECK(fedsim::test::max_rel_error(bg.grad, fd) < 1e-5);
}

TEST_CASE("aggregate of one update reproduces it bitwise") {
  const auto m = scalar_model(1.75);
  const auto out = aggregate({ClientUpdate{m, 17}});
  CHECK(bitwise_equal(out, m));
}

TEST_CASE("aggregate of opposite models cancels exactly") {
  const auto out =
      aggregate({ClientUpdate{scalar_model(2.5), 10},
                 ClientUpdate{scalar_model(-2.5), 10}});
  CHECK(out.layers[0].weight.data[0] == 0.0);
}

TEST_CASE("aggregate weights by data size") {
  // sizes {1,2,3} and values {6,3,2}: (1*6 + 2*3 + 3*2) / 6 = 3.
  const auto out = aggregate({ClientUpdate{scalar_model(6.0), 1},
                              ClientUpdate{scalar_model(3.0), 2},
                              ClientUpdate{scalar_model(2.0), 3}});
  CHECK(std::fabs(out.layers[0].weight.data[0] - 3.0) / 3.0 <= 1e-12);
}

TEST_CASE("aggregating copies of one model is idempotent") {
  rng::Stream s(440);
  const auto m = make_mlp(4, {6}, 3, s);
  for (std::size_t n : {2ul, 3ul, 7ul}) {
    std::vector<ClientUpdate> ups(n, ClientUpdate{m, 5});
    const auto out = aggregate(ups);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      for (std::size_t k = 0; k < m.layers[li].weight.data.size(); ++k) {
        const double a = out.layers[li].weight.data[k];
        const double b = m.layers[li].weight.data[k];
        CHECK(std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)));
      }
    }
  }
}

TEST_CASE("aggregate validates its inputs") {
  CHECK_THROWS_AS((void)aggregate({}), std::invalid_argument);
  CHECK_THROWS_AS((void)aggregate({ClientUpdate{scalar_model(1.0), 0}}),
                  std::invalid_argument);
  rng::Stream s(441);
  const auto a = make_mlp(2, {3}, 2, s);
  const auto b = make_mlp(2, {4}, 2, s);
  CHECK_THROWS_AS((void)aggregate({ClientUpdate{a, 1}, ClientUpdate{b, 1}}),
                  std::invalid_argument);
}

TEST_CASE("zero rounds return the initial parameters untouched") {
  const auto f = make_fed_fixture(450, 5, 1.0);
  FedConfig cfg;
  cfg.clients = 5;
  cfg.rounds = 0;
  cfg.seed = 451;
  const auto result = run_federated(f.init, cfg, f.plan, f.data);
  CHECK(bitwise_equal(result.params, f.init));
  CHECK(result.rounds.empty());
}

TEST_CASE("federated run records weights that sum to one") {
  const auto f = make_fed_fixture(460, 6, 0.8);
  FedConfig cfg;
  cfg.clients = 6;
  cfg.participation_fraction = 0.5;
  cfg.rounds = 4;
  cfg.seed = 461;
  FedRunOptions opts;
  opts.eval_data = &f.test;
  std::size_t streamed = 0;
  opts.on_round = [&](const RoundRecord& r) {
    streamed++;
    CHECK(r.selected.size() == 3);
    CHECK(r.weights.size() == r.selected.size());
    CHECK(r.sizes.size() == r.selected.size());
    double sum = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
    REQUIRE(r.accuracy.has_value());
    CHECK(*r.accuracy >= 0.0);
    CHECK(*r.accuracy <= 1.0);
  };
  const auto result = run_federated(f.init, cfg, f.plan, f.data, opts);
  CHECK(streamed == 4);
  CHECK(result.rounds.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK(result.rounds[t].round == t);
  CHECK(bitwise_equal(result.params, result.rounds.back().aggregated));
}

TEST_CASE("a one client federation is centralized training") {
  const auto f = make_fed_fixture(470, 1, 1.0);
  FedConfig cfg;
  cfg.clients = 1;
  cfg.participation_fraction = 1.0;
  cfg.rounds = 3;
  cfg.local_epochs = 2;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 16;
  cfg.seed = 471;
  const auto fed = run_federated(f.init, cfg, f.plan, f.data);

  // Centralized replica: chain local updates with the same per-round seeds.
  // Aggregating a single update is weight-1.0 exact, so bits must agree.
  const auto shard = subset(f.data, f.plan.client_indices[0]);
  MlpParams central = f.init;
  for (std::size_t t = 0; t < cfg.rounds; ++t)
    central = local_update(central, shard, cfg.local_epochs, cfg.learning_rate,
                           cfg.batch_size, client_seed(cfg.seed, t, 0));
  CHECK(bitwise_equal(fed.params, central));
}

TEST_CASE("federated runs are reproducible and mode independent") {
  use_threads(3);
  const auto f = make_fed_fixture(480, 6, 0.6);
  FedConfig cfg;
  cfg.clients = 6;
  cfg.participation_fraction = 0.5;
  cfg.rounds = 3;
  cfg.seed = 481;
  cfg.exec = Execution::serial;
  const auto a = run_federated(f.init, cfg, f.plan, f.data);
  const auto b = run_federated(f.init, cfg, f.plan, f.data);
  CHECK(bitwise_equal(a.params, b.params));
  cfg.exec = Execution::parallel;
  const auto c = run_federated(f.init, cfg, f.plan, f.data);
  CHECK(bitwise_equal(a.params, c.params));
}

TEST_CASE("federated run rejects a partition that does not cover the data") {
  const auto f = make_fed_fixture(490, 4, 1.0);
  FedConfig cfg;
  cfg.clients = 4;
  cfg.seed = 491;

  auto missing = f.plan;
  missing.client_indices[0].pop_back();
  CHECK_THROWS_WITH_AS((void)run_federated(f.init, cfg, missing, f.data),
                       doctest::Contains("covers"), std::invalid_argument);

  auto dup = f.plan;
  dup.client_indices[0].back() = dup.client_indices[1].front();
  CHECK_THROWS_WITH_AS((void)run_federated(f.init, cfg, dup, f.data),
                       doctest::Contains("repeated"), std::invalid_argument);

  auto empty = f.plan;
  for (auto idx : empty.client_indices[0]) empty.client_indices[1].push_back(idx);
  empty.client_indices[0].clear();
  CHECK_THROWS_WITH_AS((void)run_federated(f.init, cfg, empty, f.data),
                       doctest::Contains("empty"), std::invalid_argument);

  FedConfig wrong = cfg;
  wrong.clients = 5;
  CHECK_THROWS_AS((void)run_federated(f.init, wrong, f.plan, f.data),
                  std::invalid_argument);
}

TEST_CASE("iid data beats a heavily skewed partition") {
  // Median over 3 seeds of final accuracy, same budget either way.
  std::vector<double> iid_acc, skewed_acc;
  for (std::uint64_t seed : {500ull, 600ull, 700ull}) {
    const auto all = generate_synthetic(5, 6, 150, 2.0, seed);
    auto [test, train] = take_per_class(all, 40, seed + 1);

    FedConfig cfg;
    cfg.clients = 8;
    cfg.participation_fraction = 0.5;
    cfg.rounds = 12;
    cfg.local_epochs = 1;
    cfg.learning_rate = 0.08;
    cfg.batch_size = 16;
    cfg.seed = seed + 2;

    rng::Stream ms(seed + 3);
    const auto init = make_mlp(6, {10}, 5, ms);

    FedRunOptions opts;
    opts.eval_data = &test;

    const auto iid_plan = dirichlet_partition(train, 8, 1e6, seed + 4);
    const auto iid = run_federated(init, cfg, iid_plan, train, opts);
    iid_acc.push_back(*iid.rounds.back().accuracy);

    const auto skew_plan = dirichlet_partition(train, 8, 0.1, seed + 4);
    const auto skewed = run_federated(init, cfg, skew_plan, train, opts);
    skewed_acc.push_back(*skewed.rounds.back().accuracy);
  }
  std::sort(iid_acc.begin(), iid_acc.end());
  std::sort(skewed_acc.begin(), skewed_acc.end());
  CHECK(iid_acc[1] > skewed_acc[1]);
}
