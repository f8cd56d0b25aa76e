#include "fedsim/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedsim {

namespace {

void require_kind(const Json& j, const std::string& kind) {
  if (!j.is_object())
    throw std::runtime_error("expected a JSON object for kind '" + kind + "'");
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kFormatVersion)
    throw std::runtime_error("unsupported format_version for kind '" + kind +
                             "'");
  if (!j.contains("kind") || j.at("kind").get<std::string>() != kind)
    throw std::runtime_error("expected kind '" + kind + "', got '" +
                             j.value("kind", std::string("<missing>")) + "'");
}

std::string act_name(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

Activation act_from_name(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::runtime_error("unknown activation '" + s + "'");
}

// Shortest round-trip decimal form, shared by every CSV writer.
std::string fmt(double x) { return Json(x).dump(); }

}  // namespace

Json to_json(const Matrix& m) {
  return Json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const Json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols)
    throw std::runtime_error("matrix data length " +
                             std::to_string(m.data.size()) +
                             " does not equal rows*cols");
  return m;
}

Json to_json(const DenseLayer& layer) {
  Json j = to_json(layer.weight);
  j["bias"] = layer.bias;
  j["act"] = act_name(layer.act);
  return j;
}

DenseLayer layer_from_json(const Json& j) {
  DenseLayer l;
  l.weight = matrix_from_json(j);
  l.bias = j.at("bias").get<std::vector<double>>();
  l.act = act_from_name(j.at("act").get<std::string>());
  if (l.bias.size() != l.weight.rows)
    throw std::runtime_error("layer bias length does not match rows");
  return l;
}

Json params_json(const MlpParams& params, const std::string& stage) {
  Json layers = Json::array();
  for (const DenseLayer& l : params.layers) layers.push_back(to_json(l));
  return Json{{"format_version", kFormatVersion},
              {"kind", "mlp_params"},
              {"stage", stage},
              {"layers", layers}};
}

MlpParams params_from_json(const Json& j) {
  require_kind(j, "mlp_params");
  MlpParams p;
  for (const Json& lj : j.at("layers")) p.layers.push_back(layer_from_json(lj));
  check_chain(p);
  return p;
}

Json teacher_json(const TeacherBundle& bundle) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "teacher_bundle"},
              {"encoder", params_json(bundle.encoder, "teacher_encoder")},
              {"projector", to_json(bundle.projector)},
              {"zero_shot_head", to_json(bundle.zero_shot_head)},
              {"metadata",
               Json{{"holdout_accuracy", bundle.metadata.holdout_accuracy},
                    {"train_examples", bundle.metadata.train_examples},
                    {"holdout_examples", bundle.metadata.holdout_examples},
                    {"seed", bundle.metadata.seed}}}};
}

TeacherBundle teacher_from_json(const Json& j) {
  require_kind(j, "teacher_bundle");
  TeacherBundle b;
  b.encoder = params_from_json(j.at("encoder"));
  b.projector = matrix_from_json(j.at("projector"));
  b.zero_shot_head = layer_from_json(j.at("zero_shot_head"));
  const Json& m = j.at("metadata");
  b.metadata.holdout_accuracy = m.at("holdout_accuracy").get<double>();
  b.metadata.train_examples = m.at("train_examples").get<std::size_t>();
  b.metadata.holdout_examples = m.at("holdout_examples").get<std::size_t>();
  b.metadata.seed = m.at("seed").get<std::uint64_t>();
  return b;
}

Json frozen_head_json(const FrozenHead& head) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "frozen_head"},
              {"projector", to_json(head.projector)},
              {"task_head", to_json(head.task_head)}};
}

FrozenHead frozen_head_from_json(const Json& j) {
  require_kind(j, "frozen_head");
  FrozenHead h;
  h.projector = matrix_from_json(j.at("projector"));
  h.task_head = layer_from_json(j.at("task_head"));
  return h;
}

Json round_record_json(const RoundRecord& rec) {
  Json j{{"round", rec.round},
         {"selected", rec.selected},
         {"sizes", rec.sizes},
         {"weights", rec.weights}};
  j["accuracy"] = rec.accuracy ? Json(*rec.accuracy) : Json(nullptr);
  return j;
}

Json group_accuracy_json(const GroupAccuracy& groups) {
  auto opt = [](const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
  };
  return Json{{"all", groups.all},
              {"many", opt(groups.many)},
              {"medium", opt(groups.medium)},
              {"few", opt(groups.few)}};
}

Json confusion_json(const ConfusionMatrix& confusion) {
  Json rows = Json::array();
  for (std::size_t k = 0; k < confusion.num_classes; ++k) {
    Json row = Json::array();
    for (std::size_t p = 0; p < confusion.num_classes; ++p)
      row.push_back(confusion.at(k, p));
    rows.push_back(row);
  }
  return Json{{"classes", confusion.num_classes}, {"counts", rows}};
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
  std::ostringstream out;
  out << "true_class";
  for (std::size_t p = 0; p < confusion.num_classes; ++p) out << ",pred_" << p;
  out << "\n";
  for (std::size_t k = 0; k < confusion.num_classes; ++k) {
    out << k;
    for (std::size_t p = 0; p < confusion.num_classes; ++p)
      out << "," << confusion.at(k, p);
    out << "\n";
  }
  return out.str();
}

std::string normalized_confusion_csv(const NormalizedConfusion& confusion) {
  std::ostringstream out;
  out << "true_class";
  for (std::size_t p = 0; p < confusion.num_classes; ++p) out << ",pred_" << p;
  out << ",zero_row\n";
  for (std::size_t k = 0; k < confusion.num_classes; ++k) {
    out << k;
    for (std::size_t p = 0; p < confusion.num_classes; ++p)
      out << "," << fmt(confusion.at(k, p));
    out << "," << (confusion.zero_row[k] ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string rounds_csv(const std::vector<RoundRecord>& rounds) {
  std::ostringstream out;
  out << "round,accuracy\n";
  for (const RoundRecord& r : rounds) {
    out << r.round << ",";
    if (r.accuracy) out << fmt(*r.accuracy);
    out << "\n";
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace fedsim
