#pragma once

#include <cstdint>
#include <span>

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/teacher.hpp"

namespace fedsim {

struct AlignConfig {
  double beta = 1.0;  // weight of the teacher-matching term, >= 0
  double learning_rate = 0.01;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
};

// Combined server loss on one example: cross-entropy of the student logits p
// against the label, plus beta times KL(softmax(q) || softmax(p)) pulling p
// toward the frozen teacher logits q. Gradient is w.r.t. p only. At beta = 0
// this IS cross_entropy: the teacher term is skipped, not multiplied out.
LossGrad align_loss(std::span<const double> student_logits,
                    std::span<const double> teacher_logits,
                    std::size_t label, double beta);

// Post-aggregation fine-tune on the class-balanced alignment set, teacher
// logits recomputed from raw inputs each time. Input params and teacher are
// untouched; returns the tuned copy. Shares the SGD loop with local_update,
// so at beta = 0 and equal loop settings the two are bit-identical.
MlpParams global_align(const MlpParams& agg_params, const TeacherBundle& teacher,
                       const Dataset& align_set, const AlignConfig& cfg);

}  // namespace fedsim
