#include "fedsim/align.hpp"

#include <stdexcept>
#include <string>

namespace fedsim {

LossGrad align_loss(std::span<const double> student_logits,
                    std::span<const double> teacher_logits,
                    std::size_t label, double beta) {
  if (beta < 0.0)
    throw std::invalid_argument("align_loss: beta must be >= 0, got " +
                                std::to_string(beta));
  if (beta == 0.0) return cross_entropy(student_logits, label);
  if (student_logits.size() != teacher_logits.size())
    throw std::invalid_argument("align_loss: student has " +
                                std::to_string(student_logits.size()) +
                                " logits, teacher has " +
                                std::to_string(teacher_logits.size()));
  LossGrad ce = cross_entropy(student_logits, label);
  LossGrad kl = kl_divergence(teacher_logits, student_logits);
  LossGrad out;
  out.value = ce.value + beta * kl.value;
  out.grad.resize(ce.grad.size());
  for (std::size_t i = 0; i < out.grad.size(); ++i)
    out.grad[i] = ce.grad[i] + beta * kl.grad[i];
  return out;
}

MlpParams global_align(const MlpParams& agg_params, const TeacherBundle& teacher,
                       const Dataset& align_set, const AlignConfig& cfg) {
  align_set.validate();
  if (align_set.size() == 0)
    throw std::invalid_argument("global_align: empty alignment set");

  // The alignment set must be class-balanced; that is its whole point.
  auto counts = align_set.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] != counts[0])
      throw std::invalid_argument(
          "global_align: alignment set is not class-balanced (class 0 has " +
          std::to_string(counts[0]) + " samples, class " + std::to_string(k) +
          " has " + std::to_string(counts[k]) + ")");
  if (counts[0] == 0)
    throw std::invalid_argument("global_align: a class has no samples");

  check_chain(agg_params);
  if (agg_params.input_dim() != align_set.feature_dim)
    throw std::invalid_argument("global_align: model takes " +
                                std::to_string(agg_params.input_dim()) +
                                "-dim inputs, data has " +
                                std::to_string(align_set.feature_dim));
  if (agg_params.output_dim() != align_set.num_classes)
    throw std::invalid_argument("global_align: model emits " +
                                std::to_string(agg_params.output_dim()) +
                                " logits for " +
                                std::to_string(align_set.num_classes) +
                                " classes");
  if (cfg.beta > 0.0) {
    if (teacher.encoder.input_dim() != align_set.feature_dim)
      throw std::invalid_argument("global_align: teacher takes " +
                                  std::to_string(teacher.encoder.input_dim()) +
                                  "-dim inputs, data has " +
                                  std::to_string(align_set.feature_dim));
    if (teacher.zero_shot_head.weight.rows != align_set.num_classes)
      throw std::invalid_argument("global_align: teacher emits " +
                                  std::to_string(
                                      teacher.zero_shot_head.weight.rows) +
                                  " logits for " +
                                  std::to_string(align_set.num_classes) +
                                  " classes");
  }

  MlpParams params = agg_params;

  ExampleGradFn fn = [&](const MlpParams& p, std::size_t i) -> ExampleLossGrad {
    Vector p_logits = forward(p, align_set.example(i));
    const std::size_t label = static_cast<std::size_t>(align_set.labels[i]);
    LossGrad lg;
    if (cfg.beta == 0.0) {
      lg = align_loss(p_logits, {}, label, 0.0);
    } else {
      Vector q_logits = teacher_logits(teacher, align_set.example(i));
      lg = align_loss(p_logits, q_logits, label, cfg.beta);
    }
    return {lg.value, backward(p, align_set.example(i), lg.grad)};
  };

  SgdConfig loop;
  loop.epochs = cfg.epochs;
  loop.learning_rate = cfg.learning_rate;
  loop.batch_size = cfg.batch_size;
  loop.seed = cfg.seed;
  loop.exec = cfg.exec;
  loop.context = "global_align";
  sgd_train(params, align_set.size(), fn, loop);
  return params;
}

}  // namespace fedsim
