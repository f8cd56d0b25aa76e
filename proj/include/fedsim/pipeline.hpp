#pragma once

#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/serialize.hpp"
#include "fedsim/teacher.hpp"

namespace fedsim {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineResult {
  Json manifest;
  Json metrics;
  std::vector<RoundRecord> rounds;
  MlpParams final_params;
  std::string output_dir;  // after FEDSIM_OUTPUT_ROOT resolution
};

// Relative output directories are rooted at $FEDSIM_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& output_dir);

// The full three-stage pipeline: data synthesis and splits, teacher
// training, optional dynamic weighted pretraining, federated rounds,
// optional global alignment, evaluation. Writes manifest.json, metrics.json,
// rounds.jsonl, CSV renderings, and checkpoints under the output directory.
// On a stage failure a manifest with status "partial" naming the failed
// stage is written and the error is rethrown with that stage's name.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

// Teacher stage alone: trains the bundle on the balanced teacher split and
// writes teacher.json. Returns the bundle.
TeacherBundle run_teacher_training(const ExperimentConfig& cfg);

// Diff of two completed runs' metrics: overall, group, and per-class
// accuracy deltas of b relative to a, each with a sign flag. Throws when
// the runs' class counts or eval thresholds differ.
Json compare_runs(const std::string& manifest_a_path,
                  const std::string& manifest_b_path);

// Plain-text table rendering of a compare_runs report.
std::string compare_report_text(const Json& report);

}  // namespace fedsim
