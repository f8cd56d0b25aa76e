#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

struct TeacherConfig {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 16;    // output width of the frozen encoder
  std::size_t projector_dim = 16;  // rows of the bundled projector
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  double holdout_fraction = 0.2;  // internal split for the recorded accuracy
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
};

struct TeacherMetadata {
  double holdout_accuracy = 0.0;
  std::size_t train_examples = 0;
  std::size_t holdout_examples = 0;
  std::uint64_t seed = 0;
};

// Frozen stand-in for a large pretrained visual stack: an encoder trained on
// the balanced source, a projector into the downstream feature space, and the
// zero-shot classification head. Immutable after train_teacher returns; every
// later stage takes it by const reference.
struct TeacherBundle {
  MlpParams encoder;          // input dim d -> feature dim f, relu hidden
  Matrix projector;           // projector_dim x f, bias-free
  DenseLayer zero_shot_head;  // f -> K logits
  TeacherMetadata metadata;
};

// Trains encoder + head end to end on a balanced dataset, splits off an
// internal holdout for the recorded accuracy, then freezes everything.
// Throws on imbalanced input (max/min class count > 2), on dimension
// problems, and on a diverging (non-finite) training loss.
TeacherBundle train_teacher(const Dataset& train_data, const TeacherConfig& cfg);

// Frozen forward pass through the encoder only; length feature_dim.
Vector teacher_features(const TeacherBundle& bundle, std::span<const double> x);

// Frozen zero-shot logits: zero_shot_head applied to teacher_features(x).
Vector teacher_logits(const TeacherBundle& bundle, std::span<const double> x);

}  // namespace fedsim
