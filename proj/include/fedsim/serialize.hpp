#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/eval.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/pretrain.hpp"
#include "fedsim/teacher.hpp"

namespace fedsim {

using Json = nlohmann::json;

// Parameter-file format version; every readable artifact carries it.
inline constexpr int kFormatVersion = 1;

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const DenseLayer& layer);
DenseLayer layer_from_json(const Json& j);

// kind "mlp_params". `stage` tags what produced it (init, pretrained,
// aggregated, aligned); reads validate kind and version.
Json params_json(const MlpParams& params, const std::string& stage);
MlpParams params_from_json(const Json& j);

// kind "teacher_bundle", including recorded metadata.
Json teacher_json(const TeacherBundle& bundle);
TeacherBundle teacher_from_json(const Json& j);

// kind "frozen_head".
Json frozen_head_json(const FrozenHead& head);
FrozenHead frozen_head_from_json(const Json& j);

// One line of the round log: round, selected, sizes, weights, accuracy.
// Parameters stay out of the log and gradients do not exist to include.
Json round_record_json(const RoundRecord& rec);

Json group_accuracy_json(const GroupAccuracy& groups);
Json confusion_json(const ConfusionMatrix& confusion);

// CSV renderings. Doubles use the shortest round-trip form so files are
// byte-stable across runs.
std::string confusion_csv(const ConfusionMatrix& confusion);
std::string normalized_confusion_csv(const NormalizedConfusion& confusion);
std::string rounds_csv(const std::vector<RoundRecord>& rounds);

// Plain file helpers; throw std::runtime_error naming the path on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace fedsim
