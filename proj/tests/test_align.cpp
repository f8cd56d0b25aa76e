#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fd_oracle.hpp"
#include "fedsim/align.hpp"
#include "fedsim/datagen.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/teacher.hpp"

using namespace fedsim;
using fedsim::test::fd_vector_gradient;
using fedsim::test::max_rel_error;

namespace {

struct AlignFixture {
  Dataset pool;
  Dataset align_set;
  TeacherBundle teacher;
  MlpParams model;
};

AlignFixture make_align_fixture(std::uint64_t seed) {
  AlignFixture f;
  f.pool = generate_synthetic(4, 6, 60, 3.0, seed);
  f.align_set = build_alignment_set(f.pool, 8, seed + 1);
  TeacherConfig tc;
  tc.hidden = {12};
  tc.feature_dim = 6;
  tc.projector_dim = 6;
  tc.epochs = 10;
  tc.seed = seed + 2;
  f.teacher = train_teacher(f.pool, tc);
  rng::Stream s(seed + 3);
  f.model = make_mlp(6, {10}, 4, s);
  return f;
}

}  // namespace

TEST_CASE("align_loss at beta zero is exactly cross entropy") {
  const Vector p = {1.2, -0.3, 0.8};
  const Vector q = {9.0, 9.0, 9.0};  // must be ignored entirely
  const auto a = align_loss(p, q, 2, 0.0);
  const auto ce = cross_entropy(p, 2);
  CHECK(a.value == ce.value);
  CHECK(a.grad == ce.grad);
  // Even an empty teacher span is fine at beta zero.
  const auto b = align_loss(p, Vector{}, 2, 0.0);
  CHECK(b.value == ce.value);
  CHECK(b.grad == ce.grad);
}

TEST_CASE("align_loss with matching logits reduces to pure cross entropy") {
  const Vector p = {0.0, 0.0, 0.0};
  const auto a = align_loss(p, p, 1, 3.0);
  // KL(softmax(p) || softmax(p)) = 0, CE of uniform logits = ln 3.
  CHECK(std::fabs(a.value - std::log(3.0)) < 1e-12);
}

TEST_CASE("align_loss matches a term-by-term oracle at beta two") {
  const Vector p = {0.4, -1.1, 0.7};
  const Vector q = {1.0, 0.2, -0.5};
  const std::size_t label = 1;
  const double beta = 2.0;
  const auto got = align_loss(p, q, label, beta);

  // Independent scalar computation of CE + beta * KL.
  auto soft = [](const Vector& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    Vector e(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      e[i] = std::exp(v[i] - mx);
      sum += e[i];
    }
    for (double& x : e) x /= sum;
    return e;
  };
  const Vector sp = soft(p);
  const Vector sq = soft(q);
  const double ce = -std::log(sp[label]);
  double kl = 0.0;
  for (std::size_t i = 0; i < 3; ++i) kl += sq[i] * std::log(sq[i] / sp[i]);
  CHECK(std::fabs(got.value - (ce + beta * kl)) <= 1e-12);

  // Gradient: softmax(p) - onehot + beta * (softmax(p) - softmax(q)).
  for (std::size_t i = 0; i < 3; ++i) {
    const double want =
        sp[i] - (i == label ? 1.0 : 0.0) + beta * (sp[i] - sq[i]);
    CHECK(std::fabs(got.grad[i] - want) <= 1e-12);
  }
}

TEST_CASE("align_loss gradient matches finite differences") {
  rng::Stream s(900);
  for (double beta : {0.0, 0.5, 1.0, 2.0}) {
    for (int rep = 0; rep < 5; ++rep) {
      Vector p(4), q(4);
      for (double& v : p) v = 2.0 * s.normal();
      for (double& v : q) v = 2.0 * s.normal();
      const std::size_t label = s.uniform_index(4);
      const auto got = align_loss(p, q, label, beta);
      const Vector fd = fd_vector_gradient(p, [&](const Vector& z) {
        return align_loss(z, q, label, beta).value;
      });
      CHECK(max_rel_error(got.grad, fd) < 1e-6);
    }
  }
}

TEST_CASE("align_loss never drops below plain cross entropy") {
  rng::Stream s(910);
  for (int rep = 0; rep < 50; ++rep) {
    Vector p(5), q(5);
    for (double& v : p) v = 3.0 * s.normal();
    for (double& v : q) v = 3.0 * s.normal();
    const std::size_t label = s.uniform_index(5);
    const double base = cross_entropy(p, label).value;
    CHECK(align_loss(p, q, label, 1.5).value >= base);
  }
}

TEST_CASE("align_loss validates beta and shapes") {
  const Vector p = {1.0, 2.0};
  CHECK_THROWS_AS((void)align_loss(p, p, 0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)align_loss(p, Vector{1.0, 2.0, 3.0}, 0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)align_loss(p, p, 5, 1.0), std::invalid_argument);
}

TEST_CASE("global_align with zero epochs returns the input params") {
  const auto f = make_align_fixture(920);
  AlignConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 921;
  const auto out = global_align(f.model, f.teacher, f.align_set, cfg);
  CHECK(bitwise_equal(out, f.model));
}

TEST_CASE("global_align at beta zero is bit-identical to a local update") {
  const auto f = make_align_fixture(930);
  AlignConfig cfg;
  cfg.beta = 0.0;
  cfg.learning_rate = 0.02;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 931;
  const auto aligned = global_align(f.model, f.teacher, f.align_set, cfg);
  const auto local = local_update(f.model, f.align_set, cfg.epochs,
                                  cfg.learning_rate, cfg.batch_size, cfg.seed);
  CHECK(bitwise_equal(aligned, local));
}

TEST_CASE("global_align is reproducible and leaves its inputs untouched") {
  const auto f = make_align_fixture(940);
  const auto model_before = f.model;
  const auto encoder_before = f.teacher.encoder;
  AlignConfig cfg;
  cfg.beta = 1.0;
  cfg.epochs = 2;
  cfg.seed = 941;
  const auto a = global_align(f.model, f.teacher, f.align_set, cfg);
  const auto b = global_align(f.model, f.teacher, f.align_set, cfg);
  CHECK(bitwise_equal(a, b));
  CHECK(bitwise_equal(f.model, model_before));
  CHECK(bitwise_equal(f.teacher.encoder, encoder_before));
  CHECK(!bitwise_equal(a, f.model));
}

TEST_CASE("global_align improves fit on the alignment set") {
  const auto f = make_align_fixture(950);
  AlignConfig cfg;
  cfg.beta = 1.0;
  cfg.learning_rate = 0.05;
  cfg.epochs = 8;
  cfg.seed = 951;
  const auto out = global_align(f.model, f.teacher, f.align_set, cfg);

  auto accuracy = [&](const MlpParams& m) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < f.align_set.size(); ++i) {
      const auto logits = forward(m, f.align_set.example(i));
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = k;
      if (std::int32_t(best) == f.align_set.labels[i]) hits++;
    }
    return double(hits) / double(f.align_set.size());
  };
  CHECK(accuracy(out) > accuracy(f.model));
}

TEST_CASE("global_align rejects an imbalanced alignment set") {
  const auto f = make_align_fixture(960);
  auto unbalanced = f.align_set;
  // Drop the last example (one class loses a sample).
  unbalanced.labels.pop_back();
  unbalanced.origin.pop_back();
  unbalanced.features.resize(unbalanced.features.size() - unbalanced.feature_dim);
  AlignConfig cfg;
  cfg.seed = 961;
  CHECK_THROWS_WITH_AS((void)global_align(f.model, f.teacher, unbalanced, cfg),
                       doctest::Contains("balanced"), std::invalid_argument);
}

TEST_CASE("global_align validates model and teacher dimensions") {
  const auto f = make_align_fixture(970);
  AlignConfig cfg;
  cfg.seed = 971;
  rng::Stream s(972);
  const auto narrow = make_mlp(6, {10}, 3, s);  // wrong class count
  CHECK_THROWS_AS((void)global_align(narrow, f.teacher, f.align_set, cfg),
                  std::invalid_argument);
  const auto wrong_in = make_mlp(5, {10}, 4, s);
  CHECK_THROWS_AS((void)global_align(wrong_in, f.teacher, f.align_set, cfg),
                  std::invalid_argument);

  // With beta 0 the teacher is never touched, so its shape cannot matter.
  AlignConfig ce_only = cfg;
  ce_only.beta = 0.0;
  ce_only.epochs = 1;
  TeacherBundle empty_teacher;
  Matrix w(2, 2);
  empty_teacher.encoder.layers.push_back(
      DenseLayer{w, Vector{0.0, 0.0}, Activation::identity});
  const auto out = global_align(f.model, empty_teacher, f.align_set, ce_only);
  CHECK(all_finite(out));
}
