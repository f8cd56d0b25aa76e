#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/teacher.hpp"

namespace fedsim {

// Cosine ramp of the teacher/student mix factor: 0 at the start of training,
// 1 from the end of ramp_epochs onward, nondecreasing throughout.
struct MixSchedule {
  std::size_t total_epochs = 4;
  std::size_t ramp_epochs = 2;
};

// Throws unless 0 < ramp_epochs <= total_epochs.
void validate(const MixSchedule& schedule);

// Mix factor at the given fraction of the ramp: (1 - cos(pi * progress)) / 2.
// Exactly 0 at progress 0 and exactly 1 at progress 1. Throws outside [0,1].
double alpha_at(const MixSchedule& schedule, double progress);

// (1 - alpha) * teacher_feat + alpha * student_feat, elementwise.
Vector mixed_features(double alpha, std::span<const double> teacher_feat,
                      std::span<const double> student_feat);

// Projector + task head trained on teacher features, then frozen for the
// whole of pretraining. The projector is bias-free (it starts from the
// bundle's projector and the bias is pinned at zero during training).
struct FrozenHead {
  Matrix projector;      // projector_dim x feature_dim
  DenseLayer task_head;  // projector_dim -> classes
};

struct HeadTrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
};

// Fits projector and task head jointly to classify teacher features (the
// all-teacher mix regime). The bundle itself is untouched.
FrozenHead train_frozen_head(const TeacherBundle& teacher, const Dataset& data,
                             const HeadTrainConfig& cfg);

struct PretrainConfig {
  std::size_t epochs = 4;
  double learning_rate = 2e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
  MixSchedule schedule;
  // Testing hook: hold the mix factor constant instead of following the
  // schedule. At 0.0 the student has no gradient path at all.
  std::optional<double> alpha_override;
};

// Loss and student-parameter gradient for one example at a fixed mix factor:
// cross-entropy of task_head(projector((1-a) g(x) + a g_fl(x))) against the
// label, differentiated through the mix into the student only.
ExampleLossGrad dwp_example_grad(const MlpParams& student,
                                 const TeacherBundle& teacher,
                                 const FrozenHead& head, const Dataset& data,
                                 std::size_t example, double alpha);

struct PretrainResult {
  MlpParams student;
  std::vector<double> epoch_loss;
  std::vector<double> alpha_trace;  // one entry per batch, in step order
};

// Dynamic weighted pretraining: per batch, mix teacher and student features
// with the scheduled alpha, drive the frozen projector + head, and update the
// student alone. Teacher and head are read-only.
PretrainResult pretrain_student(const MlpParams& student,
                                const TeacherBundle& teacher,
                                const FrozenHead& head, const Dataset& data,
                                const PretrainConfig& cfg);

}  // namespace fedsim
