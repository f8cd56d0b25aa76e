#include "fedsim/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedsim {

TeacherBundle train_teacher(const Dataset& train_data, const TeacherConfig& cfg) {
  train_data.validate();
  if (train_data.size() == 0)
    throw std::invalid_argument("train_teacher: empty dataset");
  if (cfg.feature_dim == 0 || cfg.projector_dim == 0)
    throw std::invalid_argument("train_teacher: zero feature or projector dim");
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0))
    throw std::invalid_argument(
        "train_teacher: holdout_fraction must be in (0,1)");

  // The teacher must be trained on (near-)balanced data; a long-tailed feed
  // here would defeat its role as the strong frozen reference.
  auto counts = train_data.class_counts();
  std::size_t cmin = counts[0], cmax = counts[0];
  for (std::size_t c : counts) {
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
  }
  if (cmin == 0)
    throw std::invalid_argument("train_teacher: a class has no samples");
  if (static_cast<double>(cmax) > 2.0 * static_cast<double>(cmin))
    throw std::invalid_argument(
        "train_teacher: training data is imbalanced (max class " +
        std::to_string(cmax) + ", min class " + std::to_string(cmin) + ")");

  auto [holdout, train] =
      split_fraction(train_data, cfg.holdout_fraction,
                     rng::derive_seed(cfg.seed, 1));
  if (holdout.size() == 0 || train.size() == 0)
    throw std::invalid_argument("train_teacher: degenerate holdout split");

  // Combined net: hidden relu stack, an identity feature layer of width f,
  // then the classification layer. Identity on the feature layer is what
  // makes the encoder/head split below exact: the encoder's forward (where
  // that layer is final) computes the same values as it does mid-net here.
  rng::Stream init_stream(rng::derive_seed(cfg.seed, 0));
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(cfg.feature_dim);
  MlpParams net = make_mlp(train_data.feature_dim, widths,
                           train_data.num_classes, init_stream);
  net.layers[net.layers.size() - 2].act = Activation::identity;

  ExampleGradFn ce_grad = [&train](const MlpParams& p,
                                   std::size_t i) -> ExampleLossGrad {
    Vector logits = forward(p, train.example(i));
    LossGrad lg = cross_entropy(logits, static_cast<std::size_t>(train.labels[i]));
    return {lg.value, backward(p, train.example(i), lg.grad)};
  };

  SgdConfig loop;
  loop.epochs = cfg.epochs;
  loop.learning_rate = cfg.learning_rate;
  loop.batch_size = cfg.batch_size;
  loop.seed = rng::derive_seed(cfg.seed, 2);
  loop.exec = cfg.exec;
  loop.context = "train_teacher";
  sgd_train(net, train.size(), ce_grad, loop);

  if (!all_finite(net))
    throw std::runtime_error("train_teacher: non-finite parameters after training");

  std::vector<std::int32_t> pred = predict_labels(net, holdout, cfg.exec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < holdout.size(); ++i)
    if (pred[i] == holdout.labels[i]) ++correct;

  TeacherBundle bundle;
  bundle.encoder.layers.assign(net.layers.begin(), net.layers.end() - 1);
  bundle.zero_shot_head = net.layers.back();

  rng::Stream proj_stream(rng::derive_seed(cfg.seed, 3));
  bundle.projector = Matrix(cfg.projector_dim, cfg.feature_dim);
  const double sd = std::sqrt(1.0 / static_cast<double>(cfg.feature_dim));
  for (double& w : bundle.projector.data) w = sd * proj_stream.normal();

  bundle.metadata.holdout_accuracy =
      static_cast<double>(correct) / static_cast<double>(holdout.size());
  bundle.metadata.train_examples = train.size();
  bundle.metadata.holdout_examples = holdout.size();
  bundle.metadata.seed = cfg.seed;
  return bundle;
}

Vector teacher_features(const TeacherBundle& bundle, std::span<const double> x) {
  return forward(bundle.encoder, x);
}

Vector teacher_logits(const TeacherBundle& bundle, std::span<const double> x) {
  Vector f = teacher_features(bundle, x);
  Vector logits = matvec(bundle.zero_shot_head.weight, f);
  for (std::size_t r = 0; r < logits.size(); ++r)
    logits[r] += bundle.zero_shot_head.bias[r];
  return logits;
}

}  // namespace fedsim
