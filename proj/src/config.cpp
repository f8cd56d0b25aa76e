#include "fedsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim {

namespace {

// Tracks which keys a block parser consumed and rejects the rest.
class BlockReader {
 public:
  BlockReader(const Json& obj, std::string where)
      : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object())
      throw std::runtime_error("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    known_.push_back(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw std::runtime_error("config: bad value for '" + where_ + "." + key +
                               "': " + e.what());
    }
  }

  // Nested block; the caller parses it with its own reader.
  const Json* block(const char* key) {
    known_.push_back(key);
    if (!obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
        throw std::runtime_error("config: unknown key '" + where_ + "." +
                                 it.key() + "'");
    }
  }

 private:
  const Json& obj_;
  std::string where_;
  std::vector<std::string> known_;
};

void parse_dataset(const Json& j, DatasetBlock& b) {
  BlockReader r(j, "dataset");
  r.read("source", b.source);
  r.read("classes", b.classes);
  r.read("feature_dim", b.feature_dim);
  r.read("n_per_class", b.n_per_class);
  r.read("class_separation", b.class_separation);
  r.read("idx_images", b.idx_images);
  r.read("idx_labels", b.idx_labels);
  r.read("test_per_class", b.test_per_class);
  r.read("teacher_per_class", b.teacher_per_class);
  r.read("server_fraction", b.server_fraction);
  r.finish();
}

void parse_long_tail(const Json& j, LongTailBlock& b) {
  BlockReader r(j, "long_tail");
  r.read("imbalance_factor", b.imbalance_factor);
  r.read("max_per_class", b.max_per_class);
  r.finish();
}

void parse_partition(const Json& j, PartitionBlock& b) {
  BlockReader r(j, "partition");
  r.read("clients", b.clients);
  r.read("concentration", b.concentration);
  r.finish();
}

void parse_teacher(const Json& j, TeacherBlock& b) {
  BlockReader r(j, "teacher");
  r.read("hidden", b.hidden);
  r.read("feature_dim", b.feature_dim);
  r.read("projector_dim", b.projector_dim);
  r.read("epochs", b.epochs);
  r.read("learning_rate", b.learning_rate);
  r.read("batch_size", b.batch_size);
  r.read("holdout_fraction", b.holdout_fraction);
  r.finish();
}

void parse_student(const Json& j, StudentBlock& b) {
  BlockReader r(j, "student");
  r.read("hidden", b.hidden);
  r.finish();
}

void parse_pretrain(const Json& j, PretrainBlock& b) {
  BlockReader r(j, "pretrain");
  r.read("enabled", b.enabled);
  r.read("epochs", b.epochs);
  r.read("ramp_epochs", b.ramp_epochs);
  r.read("learning_rate", b.learning_rate);
  r.read("batch_size", b.batch_size);
  r.read("head_epochs", b.head_epochs);
  r.read("head_learning_rate", b.head_learning_rate);
  r.read("head_batch_size", b.head_batch_size);
  r.finish();
}

void parse_federated(const Json& j, FederatedBlock& b) {
  BlockReader r(j, "federated");
  r.read("participation_fraction", b.participation_fraction);
  r.read("rounds", b.rounds);
  r.read("local_epochs", b.local_epochs);
  r.read("learning_rate", b.learning_rate);
  r.read("batch_size", b.batch_size);
  r.finish();
}

void parse_align(const Json& j, AlignBlock& b) {
  BlockReader r(j, "align");
  r.read("enabled", b.enabled);
  r.read("beta", b.beta);
  r.read("learning_rate", b.learning_rate);
  r.read("epochs", b.epochs);
  r.read("batch_size", b.batch_size);
  r.read("per_class", b.per_class);
  r.finish();
}

void parse_eval(const Json& j, EvalBlock& b) {
  BlockReader r(j, "eval");
  r.read("many_min", b.many_min);
  r.read("few_max", b.few_max);
  r.finish();
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig cfg;
  BlockReader root(j, "<root>");
  if (const Json* b = root.block("dataset")) parse_dataset(*b, cfg.dataset);
  if (const Json* b = root.block("long_tail"))
    parse_long_tail(*b, cfg.long_tail);
  if (const Json* b = root.block("partition"))
    parse_partition(*b, cfg.partition);
  if (const Json* b = root.block("teacher")) parse_teacher(*b, cfg.teacher);
  if (const Json* b = root.block("student")) parse_student(*b, cfg.student);
  if (const Json* b = root.block("pretrain")) parse_pretrain(*b, cfg.pretrain);
  if (const Json* b = root.block("federated"))
    parse_federated(*b, cfg.federated);
  if (const Json* b = root.block("align")) parse_align(*b, cfg.align);
  if (const Json* b = root.block("eval")) parse_eval(*b, cfg.eval);
  root.read("seed", cfg.seed);
  root.read("output_dir", cfg.output_dir);
  root.read("threads", cfg.threads);
  root.read("execution", cfg.execution);
  root.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig config_from_any_json(const Json& j) {
  if (j.is_object() && j.contains("kind") &&
      j.at("kind").get<std::string>() == "run_manifest")
    return config_from_json(j.at("config"));
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_any_json(read_json_file(path));
}

void validate(const ExperimentConfig& cfg) {
  const DatasetBlock& d = cfg.dataset;
  if (d.source != "synthetic" && d.source != "idx")
    throw std::invalid_argument("config: dataset.source must be 'synthetic' or "
                                "'idx', got '" + d.source + "'");
  if (d.source == "synthetic") {
    if (d.classes < 2)
      throw std::invalid_argument("config: dataset.classes must be >= 2");
    if (d.feature_dim < 1)
      throw std::invalid_argument("config: dataset.feature_dim must be >= 1");
    if (d.n_per_class < 1)
      throw std::invalid_argument("config: dataset.n_per_class must be >= 1");
    if (d.class_separation < 0.0 || !std::isfinite(d.class_separation))
      throw std::invalid_argument(
          "config: dataset.class_separation must be finite and >= 0");
  } else {
    if (d.idx_images.empty() || d.idx_labels.empty())
      throw std::invalid_argument(
          "config: dataset.idx_images and dataset.idx_labels are required "
          "when source is 'idx'");
  }
  if (d.test_per_class < 1)
    throw std::invalid_argument("config: dataset.test_per_class must be >= 1");
  if (d.teacher_per_class < 1)
    throw std::invalid_argument(
        "config: dataset.teacher_per_class must be >= 1");
  if (!(d.server_fraction >= 0.0 && d.server_fraction < 1.0))
    throw std::invalid_argument(
        "config: dataset.server_fraction must be in [0,1)");

  if (cfg.long_tail.imbalance_factor < 1.0)
    throw std::invalid_argument(
        "config: long_tail.imbalance_factor must be >= 1");
  if (cfg.long_tail.max_per_class < 1)
    throw std::invalid_argument("config: long_tail.max_per_class must be >= 1");

  if (cfg.partition.clients < 1)
    throw std::invalid_argument("config: partition.clients must be >= 1");
  if (!(cfg.partition.concentration > 0.0))
    throw std::invalid_argument(
        "config: partition.concentration must be > 0");

  const TeacherBlock& t = cfg.teacher;
  if (t.feature_dim < 1 || t.projector_dim < 1)
    throw std::invalid_argument(
        "config: teacher.feature_dim and teacher.projector_dim must be >= 1");
  if (t.epochs < 1)
    throw std::invalid_argument("config: teacher.epochs must be >= 1");
  if (!(t.learning_rate > 0.0))
    throw std::invalid_argument("config: teacher.learning_rate must be > 0");
  if (t.batch_size < 1)
    throw std::invalid_argument("config: teacher.batch_size must be >= 1");
  if (!(t.holdout_fraction > 0.0 && t.holdout_fraction < 1.0))
    throw std::invalid_argument(
        "config: teacher.holdout_fraction must be in (0,1)");

  const PretrainBlock& p = cfg.pretrain;
  if (p.epochs < 1)
    throw std::invalid_argument("config: pretrain.epochs must be >= 1");
  if (p.ramp_epochs < 1 || p.ramp_epochs > p.epochs)
    throw std::invalid_argument(
        "config: pretrain.ramp_epochs must be in [1, pretrain.epochs]");
  if (!(p.learning_rate > 0.0))
    throw std::invalid_argument("config: pretrain.learning_rate must be > 0");
  if (p.batch_size < 1 || p.head_batch_size < 1)
    throw std::invalid_argument("config: pretrain batch sizes must be >= 1");
  if (p.head_epochs < 1)
    throw std::invalid_argument("config: pretrain.head_epochs must be >= 1");
  if (!(p.head_learning_rate > 0.0))
    throw std::invalid_argument(
        "config: pretrain.head_learning_rate must be > 0");

  const FederatedBlock& f = cfg.federated;
  if (!(f.participation_fraction > 0.0 && f.participation_fraction <= 1.0))
    throw std::invalid_argument(
        "config: federated.participation_fraction must be in (0,1]");
  if (f.rounds < 1)
    throw std::invalid_argument("config: federated.rounds must be >= 1");
  if (f.local_epochs < 1)
    throw std::invalid_argument("config: federated.local_epochs must be >= 1");
  if (!(f.learning_rate >= 0.0) || !std::isfinite(f.learning_rate))
    throw std::invalid_argument(
        "config: federated.learning_rate must be finite and >= 0");
  if (f.batch_size < 1)
    throw std::invalid_argument("config: federated.batch_size must be >= 1");

  const AlignBlock& a = cfg.align;
  if (a.beta < 0.0 || !std::isfinite(a.beta))
    throw std::invalid_argument("config: align.beta must be finite and >= 0");
  if (!(a.learning_rate >= 0.0) || !std::isfinite(a.learning_rate))
    throw std::invalid_argument(
        "config: align.learning_rate must be finite and >= 0");
  if (a.batch_size < 1)
    throw std::invalid_argument("config: align.batch_size must be >= 1");
  if (a.per_class < 1)
    throw std::invalid_argument("config: align.per_class must be >= 1");

  if (cfg.eval.few_max > cfg.eval.many_min)
    throw std::invalid_argument(
        "config: eval.few_max must not exceed eval.many_min");

  if (cfg.execution != "serial" && cfg.execution != "parallel")
    throw std::invalid_argument(
        "config: execution must be 'serial' or 'parallel', got '" +
        cfg.execution + "'");
}

Json resolved_json(const ExperimentConfig& cfg) {
  Json j = metrics_config_json(cfg);
  j["output_dir"] = cfg.output_dir;
  j["threads"] = cfg.threads;
  j["execution"] = cfg.execution;
  return j;
}

Json metrics_config_json(const ExperimentConfig& cfg) {
  return Json{
      {"dataset",
       Json{{"source", cfg.dataset.source},
            {"classes", cfg.dataset.classes},
            {"feature_dim", cfg.dataset.feature_dim},
            {"n_per_class", cfg.dataset.n_per_class},
            {"class_separation", cfg.dataset.class_separation},
            {"idx_images", cfg.dataset.idx_images},
            {"idx_labels", cfg.dataset.idx_labels},
            {"test_per_class", cfg.dataset.test_per_class},
            {"teacher_per_class", cfg.dataset.teacher_per_class},
            {"server_fraction", cfg.dataset.server_fraction}}},
      {"long_tail",
       Json{{"imbalance_factor", cfg.long_tail.imbalance_factor},
            {"max_per_class", cfg.long_tail.max_per_class}}},
      {"partition",
       Json{{"clients", cfg.partition.clients},
            {"concentration", cfg.partition.concentration}}},
      {"teacher",
       Json{{"hidden", cfg.teacher.hidden},
            {"feature_dim", cfg.teacher.feature_dim},
            {"projector_dim", cfg.teacher.projector_dim},
            {"epochs", cfg.teacher.epochs},
            {"learning_rate", cfg.teacher.learning_rate},
            {"batch_size", cfg.teacher.batch_size},
            {"holdout_fraction", cfg.teacher.holdout_fraction}}},
      {"student", Json{{"hidden", cfg.student.hidden}}},
      {"pretrain",
       Json{{"enabled", cfg.pretrain.enabled},
            {"epochs", cfg.pretrain.epochs},
            {"ramp_epochs", cfg.pretrain.ramp_epochs},
            {"learning_rate", cfg.pretrain.learning_rate},
            {"batch_size", cfg.pretrain.batch_size},
            {"head_epochs", cfg.pretrain.head_epochs},
            {"head_learning_rate", cfg.pretrain.head_learning_rate},
            {"head_batch_size", cfg.pretrain.head_batch_size}}},
      {"federated",
       Json{{"participation_fraction", cfg.federated.participation_fraction},
            {"rounds", cfg.federated.rounds},
            {"local_epochs", cfg.federated.local_epochs},
            {"learning_rate", cfg.federated.learning_rate},
            {"batch_size", cfg.federated.batch_size}}},
      {"align",
       Json{{"enabled", cfg.align.enabled},
            {"beta", cfg.align.beta},
            {"learning_rate", cfg.align.learning_rate},
            {"epochs", cfg.align.epochs},
            {"batch_size", cfg.align.batch_size},
            {"per_class", cfg.align.per_class}}},
      {"eval",
       Json{{"many_min", cfg.eval.many_min}, {"few_max", cfg.eval.few_max}}},
      {"seed", cfg.seed}};
}

Execution execution_mode(const ExperimentConfig& cfg) {
  return cfg.execution == "serial" ? Execution::serial : Execution::parallel;
}

}  // namespace fedsim
