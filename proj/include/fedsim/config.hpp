#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/kernels.hpp"
#include "fedsim/serialize.hpp"

namespace fedsim {

// Experiment configuration. Every field has an explicit default; parsing
// overwrites the ones present in the file and rejects unknown keys, and the
// resolved snapshot always echoes every field so no default stays hidden.

struct DatasetBlock {
  std::string source = "synthetic";  // "synthetic" or "idx"
  std::size_t classes = 10;
  std::size_t feature_dim = 16;
  std::size_t n_per_class = 600;
  double class_separation = 2.0;
  std::string idx_images;  // used when source == "idx"
  std::string idx_labels;
  std::size_t test_per_class = 100;
  std::size_t teacher_per_class = 150;
  double server_fraction = 0.1;  // reserved for the alignment source
};

struct LongTailBlock {
  double imbalance_factor = 100.0;
  std::size_t max_per_class = 300;
};

struct PartitionBlock {
  std::size_t clients = 20;
  double concentration = 0.5;
};

struct TeacherBlock {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 16;
  std::size_t projector_dim = 16;
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  double holdout_fraction = 0.2;
};

struct StudentBlock {
  std::vector<std::size_t> hidden = {16};
};

struct PretrainBlock {
  bool enabled = true;
  std::size_t epochs = 4;
  std::size_t ramp_epochs = 2;
  double learning_rate = 2e-3;
  std::size_t batch_size = 32;
  std::size_t head_epochs = 20;
  double head_learning_rate = 0.05;
  std::size_t head_batch_size = 64;
};

struct FederatedBlock {
  double participation_fraction = 0.4;
  std::size_t rounds = 30;
  std::size_t local_epochs = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
};

struct AlignBlock {
  bool enabled = true;
  double beta = 1.0;
  double learning_rate = 0.01;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::size_t per_class = 10;  // alignment-set size per class
};

struct EvalBlock {
  std::size_t many_min = 100;
  std::size_t few_max = 20;
};

struct ExperimentConfig {
  DatasetBlock dataset;
  LongTailBlock long_tail;
  PartitionBlock partition;
  TeacherBlock teacher;
  StudentBlock student;
  PretrainBlock pretrain;
  FederatedBlock federated;
  AlignBlock align;
  EvalBlock eval;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/exp";
  std::size_t threads = 0;             // 0 keeps the runtime default
  std::string execution = "parallel";  // or "serial"
};

// Strict parse: unknown keys and ill-typed values throw std::runtime_error
// naming the offending path. Missing keys keep their defaults.
ExperimentConfig config_from_json(const Json& j);

// Accepts either a bare config or a run manifest (unwraps its "config").
ExperimentConfig config_from_any_json(const Json& j);

ExperimentConfig load_config(const std::string& path);

// Invariant checks beyond parse-time typing; throws std::invalid_argument.
void validate(const ExperimentConfig& cfg);

// Full echo of every field, including output_dir/threads/execution.
Json resolved_json(const ExperimentConfig& cfg);

// The echo embedded in metrics files: everything that affects the numbers.
// output_dir, threads, and execution are left out so byte-identity of
// metrics holds across directories and thread counts.
Json metrics_config_json(const ExperimentConfig& cfg);

Execution execution_mode(const ExperimentConfig& cfg);

}  // namespace fedsim
