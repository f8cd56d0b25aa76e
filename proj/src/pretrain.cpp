#include "fedsim/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace fedsim {

void validate(const MixSchedule& schedule) {
  if (schedule.ramp_epochs == 0)
    throw std::invalid_argument("MixSchedule: ramp_epochs must be positive");
  if (schedule.ramp_epochs > schedule.total_epochs)
    throw std::invalid_argument("MixSchedule: ramp_epochs " +
                                std::to_string(schedule.ramp_epochs) +
                                " exceeds total_epochs " +
                                std::to_string(schedule.total_epochs));
}

double alpha_at(const MixSchedule& schedule, double progress) {
  validate(schedule);
  if (!(progress >= 0.0 && progress <= 1.0))
    throw std::invalid_argument("alpha_at: progress " +
                                std::to_string(progress) +
                                " outside [0,1]");
  // cos(pi) rounds to exactly -1.0, so both endpoints are exact.
  return (1.0 - std::cos(std::numbers::pi * progress)) / 2.0;
}

Vector mixed_features(double alpha, std::span<const double> teacher_feat,
                      std::span<const double> student_feat) {
  if (teacher_feat.size() != student_feat.size())
    throw std::invalid_argument("mixed_features: teacher dim " +
                                std::to_string(teacher_feat.size()) +
                                " != student dim " +
                                std::to_string(student_feat.size()));
  Vector z(teacher_feat.size());
  const double w = 1.0 - alpha;
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = w * teacher_feat[i] + alpha * student_feat[i];
  return z;
}

namespace {

// Forward through the frozen pair: logits = task_head(projector * z).
Vector head_logits(const FrozenHead& head, std::span<const double> z) {
  Vector h = matvec(head.projector, z);
  Vector logits = matvec(head.task_head.weight, h);
  for (std::size_t r = 0; r < logits.size(); ++r)
    logits[r] += head.task_head.bias[r];
  return logits;
}

// Shared by the public entry point and the cached training loop so both
// produce identical bits.
ExampleLossGrad dwp_grad_at(const MlpParams& student,
                            std::span<const double> teacher_feat,
                            const FrozenHead& head, std::span<const double> x,
                            std::size_t label, double alpha) {
  if (alpha == 0.0) {
    // No gradient path into the student: the loss is teacher-only.
    Vector logits = head_logits(head, teacher_feat);
    LossGrad ce = cross_entropy(logits, label);
    return {ce.value, zeros_like(student)};
  }
  Vector s = forward(student, x);
  Vector z = mixed_features(alpha, teacher_feat, s);
  Vector logits = head_logits(head, z);
  LossGrad ce = cross_entropy(logits, label);
  Vector dh = matvec_transpose(head.task_head.weight, ce.grad);
  Vector dz = matvec_transpose(head.projector, dh);
  Vector ds(dz.size());
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = alpha * dz[i];
  return {ce.value, backward(student, x, ds)};
}

std::vector<Vector> cache_teacher_features(const TeacherBundle& teacher,
                                           const Dataset& data,
                                           Execution exec) {
  std::vector<Vector> feats(data.size());
  parallel_for(data.size(), exec, [&](std::size_t i) {
    feats[i] = teacher_features(teacher, data.example(i));
  });
  return feats;
}

void check_head_dims(const TeacherBundle& teacher, const FrozenHead& head,
                     const Dataset& data, const char* who) {
  const std::size_t f = teacher.encoder.output_dim();
  if (head.projector.cols != f)
    throw std::invalid_argument(std::string(who) + ": projector takes " +
                                std::to_string(head.projector.cols) +
                                "-dim features, teacher emits " +
                                std::to_string(f));
  if (head.task_head.weight.cols != head.projector.rows)
    throw std::invalid_argument(std::string(who) +
                                ": task head input dim " +
                                std::to_string(head.task_head.weight.cols) +
                                " != projector output dim " +
                                std::to_string(head.projector.rows));
  if (head.task_head.weight.rows != data.num_classes)
    throw std::invalid_argument(std::string(who) + ": task head emits " +
                                std::to_string(head.task_head.weight.rows) +
                                " logits for " +
                                std::to_string(data.num_classes) + " classes");
}

}  // namespace

FrozenHead train_frozen_head(const TeacherBundle& teacher, const Dataset& data,
                             const HeadTrainConfig& cfg) {
  data.validate();
  if (data.size() == 0)
    throw std::invalid_argument("train_frozen_head: empty dataset");
  if (teacher.encoder.input_dim() != data.feature_dim)
    throw std::invalid_argument("train_frozen_head: teacher takes " +
                                std::to_string(teacher.encoder.input_dim()) +
                                "-dim inputs, data has " +
                                std::to_string(data.feature_dim));

  const std::size_t f = teacher.encoder.output_dim();
  const std::size_t fp = teacher.projector.rows;
  if (teacher.projector.cols != f)
    throw std::invalid_argument(
        "train_frozen_head: bundle projector does not match feature dim");

  // Trainable pair as a 2-layer net over cached teacher features. The
  // projector layer's bias gradient is zeroed every step, so the layer
  // stays a pure matrix like the bundle projector it started from.
  MlpParams pair;
  DenseLayer proj_layer;
  proj_layer.weight = teacher.projector;
  proj_layer.bias.assign(fp, 0.0);
  proj_layer.act = Activation::identity;
  pair.layers.push_back(std::move(proj_layer));

  rng::Stream head_stream(rng::derive_seed(cfg.seed, 0));
  DenseLayer out_layer;
  out_layer.weight = Matrix(data.num_classes, fp);
  const double sd = std::sqrt(2.0 / static_cast<double>(fp));
  for (double& w : out_layer.weight.data) w = sd * head_stream.normal();
  out_layer.bias.assign(data.num_classes, 0.0);
  out_layer.act = Activation::identity;
  pair.layers.push_back(std::move(out_layer));

  std::vector<Vector> feats = cache_teacher_features(teacher, data, cfg.exec);

  ExampleGradFn fn = [&](const MlpParams& p, std::size_t i) -> ExampleLossGrad {
    Vector logits = forward(p, feats[i]);
    LossGrad ce =
        cross_entropy(logits, static_cast<std::size_t>(data.labels[i]));
    GradientRecord g = backward(p, feats[i], ce.grad);
    std::fill(g.layers[0].bias.begin(), g.layers[0].bias.end(), 0.0);
    return {ce.value, std::move(g)};
  };

  SgdConfig loop;
  loop.epochs = cfg.epochs;
  loop.learning_rate = cfg.learning_rate;
  loop.batch_size = cfg.batch_size;
  loop.seed = rng::derive_seed(cfg.seed, 1);
  loop.exec = cfg.exec;
  loop.context = "train_frozen_head";
  sgd_train(pair, data.size(), fn, loop);

  FrozenHead head;
  head.projector = pair.layers[0].weight;
  head.task_head = pair.layers[1];
  return head;
}

ExampleLossGrad dwp_example_grad(const MlpParams& student,
                                 const TeacherBundle& teacher,
                                 const FrozenHead& head, const Dataset& data,
                                 std::size_t example, double alpha) {
  if (example >= data.size())
    throw std::invalid_argument("dwp_example_grad: example index out of range");
  if (student.output_dim() != teacher.encoder.output_dim())
    throw std::invalid_argument("dwp_example_grad: student emits " +
                                std::to_string(student.output_dim()) +
                                "-dim features, teacher emits " +
                                std::to_string(teacher.encoder.output_dim()));
  check_head_dims(teacher, head, data, "dwp_example_grad");
  Vector t = teacher_features(teacher, data.example(example));
  return dwp_grad_at(student, t, head, data.example(example),
                     static_cast<std::size_t>(data.labels[example]), alpha);
}

PretrainResult pretrain_student(const MlpParams& student,
                                const TeacherBundle& teacher,
                                const FrozenHead& head, const Dataset& data,
                                const PretrainConfig& cfg) {
  data.validate();
  if (data.size() == 0)
    throw std::invalid_argument("pretrain_student: empty dataset");
  validate(cfg.schedule);
  if (cfg.epochs != cfg.schedule.total_epochs)
    throw std::invalid_argument("pretrain_student: epochs " +
                                std::to_string(cfg.epochs) +
                                " disagrees with schedule total_epochs " +
                                std::to_string(cfg.schedule.total_epochs));
  check_chain(student);
  if (student.input_dim() != data.feature_dim)
    throw std::invalid_argument("pretrain_student: student takes " +
                                std::to_string(student.input_dim()) +
                                "-dim inputs, data has " +
                                std::to_string(data.feature_dim));
  if (student.output_dim() != teacher.encoder.output_dim())
    throw std::invalid_argument("pretrain_student: student emits " +
                                std::to_string(student.output_dim()) +
                                "-dim features, teacher emits " +
                                std::to_string(teacher.encoder.output_dim()));
  check_head_dims(teacher, head, data, "pretrain_student");
  if (cfg.alpha_override &&
      !(*cfg.alpha_override >= 0.0 && *cfg.alpha_override <= 1.0))
    throw std::invalid_argument("pretrain_student: alpha_override outside [0,1]");

  std::vector<Vector> feats = cache_teacher_features(teacher, data, cfg.exec);

  const std::size_t bpe = batches_per_epoch(data.size(), cfg.batch_size);
  const std::size_t ramp_steps = cfg.schedule.ramp_epochs * bpe;

  PretrainResult result;
  result.student = student;
  result.alpha_trace.reserve(cfg.epochs * bpe);

  double current_alpha = 0.0;

  ExampleGradFn fn = [&](const MlpParams& p, std::size_t i) -> ExampleLossGrad {
    return dwp_grad_at(p, feats[i], head, data.example(i),
                       static_cast<std::size_t>(data.labels[i]), current_alpha);
  };

  SgdConfig loop;
  loop.epochs = cfg.epochs;
  loop.learning_rate = cfg.learning_rate;
  loop.batch_size = cfg.batch_size;
  loop.seed = cfg.seed;
  loop.exec = cfg.exec;
  loop.context = "pretrain_student";
  loop.on_batch = [&](std::size_t, std::size_t, std::size_t global_batch) {
    if (cfg.alpha_override) {
      current_alpha = *cfg.alpha_override;
    } else if (global_batch >= ramp_steps) {
      current_alpha = 1.0;
    } else {
      const double progress =
          ramp_steps > 1 ? static_cast<double>(global_batch) /
                               static_cast<double>(ramp_steps - 1)
                         : 0.0;
      current_alpha = alpha_at(cfg.schedule, progress);
    }
    result.alpha_trace.push_back(current_alpha);
  };

  result.epoch_loss = sgd_train(result.student, data.size(), fn, loop);
  return result;
}

}  // namespace fedsim
