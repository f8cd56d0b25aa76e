#include "fedsim/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedsim/align.hpp"
#include "fedsim/eval.hpp"
#include "fedsim/pretrain.hpp"

namespace fedsim {

namespace fs = std::filesystem;

std::string resolve_output_dir(const std::string& output_dir) {
  fs::path p(output_dir);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("FEDSIM_OUTPUT_ROOT"))
    return (fs::path(root) / p).string();
  return p.string();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

struct StageClock {
  Json timings = Json::object();
  std::chrono::steady_clock::time_point mark =
      std::chrono::steady_clock::now();

  void lap(const std::string& stage) {
    timings[stage] = seconds_since(mark);
    mark = std::chrono::steady_clock::now();
  }
};

Json base_manifest(const ExperimentConfig& cfg) {
  return Json{{"format_version", kFormatVersion},
              {"kind", "run_manifest"},
              {"version", kVersion},
              {"config", resolved_json(cfg)}};
}

void write_partial_manifest(const std::string& out_dir,
                            const ExperimentConfig& cfg,
                            const Json& artifacts, const StageClock& clock,
                            const std::string& stage,
                            const std::string& error) {
  Json m = base_manifest(cfg);
  m["status"] = "partial";
  m["failed_stage"] = stage;
  m["error"] = error;
  m["artifacts"] = artifacts;
  m["timings_seconds"] = clock.timings;
  write_json_file((fs::path(out_dir) / "manifest.json").string(), m);
}

// Splits and derived sets shared by the stages.
struct PreparedData {
  Dataset test;
  Dataset teacher_data;
  Dataset server_data;
  Dataset tailed;  // long-tailed client pool
  PartitionPlan plan;
  std::optional<Dataset> align_set;
};

PreparedData prepare_data(const ExperimentConfig& cfg) {
  Dataset root;
  if (cfg.dataset.source == "synthetic") {
    root = generate_synthetic(cfg.dataset.classes, cfg.dataset.feature_dim,
                              cfg.dataset.n_per_class,
                              cfg.dataset.class_separation,
                              rng::derive_seed(cfg.seed, rng::stage::synth));
  } else {
    root = load_idx(cfg.dataset.idx_images, cfg.dataset.idx_labels);
  }
  root.validate();

  PreparedData out;
  auto [test, rest1] =
      take_per_class(root, cfg.dataset.test_per_class,
                     rng::derive_seed(cfg.seed, rng::stage::splits, 0));
  out.test = std::move(test);
  auto [teacher_data, rest2] =
      take_per_class(rest1, cfg.dataset.teacher_per_class,
                     rng::derive_seed(cfg.seed, rng::stage::splits, 1));
  out.teacher_data = std::move(teacher_data);
  auto [server_data, client_pool] =
      split_fraction(rest2, cfg.dataset.server_fraction,
                     rng::derive_seed(cfg.seed, rng::stage::splits, 2));
  out.server_data = std::move(server_data);

  LongTailSpec tail{cfg.long_tail.imbalance_factor,
                    cfg.long_tail.max_per_class};
  out.tailed = apply_long_tail(client_pool, tail,
                               rng::derive_seed(cfg.seed, rng::stage::long_tail));
  out.plan = dirichlet_partition(
      out.tailed, cfg.partition.clients, cfg.partition.concentration,
      rng::derive_seed(cfg.seed, rng::stage::partition));
  if (cfg.align.enabled)
    out.align_set = build_alignment_set(
        out.server_data, cfg.align.per_class,
        rng::derive_seed(cfg.seed, rng::stage::align_set));
  return out;
}

TeacherBundle make_teacher(const ExperimentConfig& cfg, const Dataset& data) {
  TeacherConfig tcfg;
  tcfg.hidden = cfg.teacher.hidden;
  tcfg.feature_dim = cfg.teacher.feature_dim;
  tcfg.projector_dim = cfg.teacher.projector_dim;
  tcfg.epochs = cfg.teacher.epochs;
  tcfg.learning_rate = cfg.teacher.learning_rate;
  tcfg.batch_size = cfg.teacher.batch_size;
  tcfg.holdout_fraction = cfg.teacher.holdout_fraction;
  tcfg.seed = rng::derive_seed(cfg.seed, rng::stage::teacher);
  tcfg.exec = execution_mode(cfg);
  return train_teacher(data, tcfg);
}

void apply_thread_setting(const ExperimentConfig& cfg);

}  // namespace

TeacherBundle run_teacher_training(const ExperimentConfig& cfg) {
  validate(cfg);
  apply_thread_setting(cfg);
  const std::string out_dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  PreparedData data = prepare_data(cfg);
  TeacherBundle bundle = make_teacher(cfg, data.teacher_data);
  write_json_file((fs::path(out_dir) / "teacher.json").string(),
                  teacher_json(bundle));
  return bundle;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  validate(cfg);
  apply_thread_setting(cfg);
  const Execution exec = execution_mode(cfg);
  const std::string out_dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(out_dir);

  StageClock clock;
  Json artifacts = Json::object();
  std::string stage = "data";

  auto fail = [&](const std::exception& e) -> std::runtime_error {
    write_partial_manifest(out_dir, cfg, artifacts, clock, stage, e.what());
    return std::runtime_error("stage '" + stage + "' failed: " + e.what());
  };

  try {
    // ---- data ---------------------------------------------------------
    PreparedData data = prepare_data(cfg);
    clock.lap("data");

    // ---- teacher ------------------------------------------------------
    stage = "teacher";
    TeacherBundle bundle = make_teacher(cfg, data.teacher_data);
    const fs::path dir(out_dir);
    write_json_file((dir / "teacher.json").string(), teacher_json(bundle));
    artifacts["teacher"] = "teacher.json";
    clock.lap("teacher");

    // ---- pretrain -----------------------------------------------------
    stage = "pretrain";
    // The student is seeded independently of the pretrain toggle so an
    // ablation pair starts from the same initialization.
    rng::Stream student_stream(
        rng::derive_seed(cfg.seed, rng::stage::student_init));
    MlpParams student =
        make_mlp(data.teacher_data.feature_dim, cfg.student.hidden,
                 cfg.teacher.feature_dim, student_stream);

    Json pretrain_metrics = nullptr;
    if (cfg.pretrain.enabled) {
      HeadTrainConfig hcfg;
      hcfg.epochs = cfg.pretrain.head_epochs;
      hcfg.learning_rate = cfg.pretrain.head_learning_rate;
      hcfg.batch_size = cfg.pretrain.head_batch_size;
      hcfg.seed = rng::derive_seed(cfg.seed, rng::stage::frozen_head);
      hcfg.exec = exec;
      FrozenHead head = train_frozen_head(bundle, data.teacher_data, hcfg);
      write_json_file((dir / "frozen_head.json").string(),
                      frozen_head_json(head));
      artifacts["frozen_head"] = "frozen_head.json";

      PretrainConfig pcfg;
      pcfg.epochs = cfg.pretrain.epochs;
      pcfg.learning_rate = cfg.pretrain.learning_rate;
      pcfg.batch_size = cfg.pretrain.batch_size;
      pcfg.seed = rng::derive_seed(cfg.seed, rng::stage::pretrain);
      pcfg.exec = exec;
      pcfg.schedule =
          MixSchedule{cfg.pretrain.epochs, cfg.pretrain.ramp_epochs};
      PretrainResult pres =
          pretrain_student(student, bundle, head, data.teacher_data, pcfg);
      student = std::move(pres.student);
      write_json_file((dir / "student_pretrained.json").string(),
                      params_json(student, "pretrained"));
      artifacts["student_pretrained"] = "student_pretrained.json";

      pretrain_metrics = Json{{"epoch_loss", pres.epoch_loss},
                              {"alpha_first", pres.alpha_trace.front()},
                              {"alpha_last", pres.alpha_trace.back()},
                              {"batches", pres.alpha_trace.size()}};
    }
    clock.lap("pretrain");

    // ---- federated ----------------------------------------------------
    stage = "federated";
    rng::Stream classifier_stream(
        rng::derive_seed(cfg.seed, rng::stage::classifier_init));
    MlpParams model = student;
    {
      MlpParams classifier =
          make_mlp(cfg.teacher.feature_dim, {}, data.tailed.num_classes,
                   classifier_stream);
      model.layers.push_back(std::move(classifier.layers.front()));
    }

    FedConfig fcfg;
    fcfg.clients = cfg.partition.clients;
    fcfg.participation_fraction = cfg.federated.participation_fraction;
    fcfg.rounds = cfg.federated.rounds;
    fcfg.local_epochs = cfg.federated.local_epochs;
    fcfg.learning_rate = cfg.federated.learning_rate;
    fcfg.batch_size = cfg.federated.batch_size;
    fcfg.seed = rng::derive_seed(cfg.seed, rng::stage::federated);
    fcfg.exec = exec;

    FedResult fed;
    {
      std::ofstream log((dir / "rounds.jsonl").string(), std::ios::binary);
      if (!log)
        throw std::runtime_error("cannot open rounds.jsonl for writing");
      FedRunOptions opts;
      opts.eval_data = &data.test;
      opts.on_round = [&log](const RoundRecord& rec) {
        log << round_record_json(rec).dump() << "\n";
      };
      fed = run_federated(model, fcfg, data.plan, data.tailed, opts);
    }
    artifacts["rounds_log"] = "rounds.jsonl";
    write_json_file((dir / "model_aggregated.json").string(),
                    params_json(fed.params, "aggregated"));
    artifacts["model_aggregated"] = "model_aggregated.json";
    clock.lap("federated");

    // ---- align --------------------------------------------------------
    stage = "align";
    MlpParams final_params = fed.params;
    Json align_metrics = nullptr;
    if (cfg.align.enabled) {
      EvalResult before = evaluate(fed.params, data.test, exec);
      AlignConfig acfg;
      acfg.beta = cfg.align.beta;
      acfg.learning_rate = cfg.align.learning_rate;
      acfg.epochs = cfg.align.epochs;
      acfg.batch_size = cfg.align.batch_size;
      acfg.seed = rng::derive_seed(cfg.seed, rng::stage::align);
      acfg.exec = exec;
      final_params = global_align(fed.params, bundle, *data.align_set, acfg);
      EvalResult after = evaluate(final_params, data.test, exec);
      write_json_file((dir / "model_aligned.json").string(),
                      params_json(final_params, "aligned"));
      artifacts["model_aligned"] = "model_aligned.json";
      align_metrics = Json{{"accuracy_before", before.accuracy},
                           {"accuracy_after", after.accuracy},
                           {"align_examples", data.align_set->size()}};
    }
    clock.lap("align");

    // ---- eval ---------------------------------------------------------
    stage = "eval";
    EvalResult eres = evaluate(final_params, data.test, exec);
    const std::vector<std::size_t> train_counts = data.tailed.class_counts();
    GroupThresholds thresholds{cfg.eval.many_min, cfg.eval.few_max};
    GroupAccuracy groups =
        group_accuracy(eres.confusion, train_counts, thresholds);
    NormalizedConfusion norm = normalize_confusion(eres.confusion);

    Json rounds_accuracy = Json::array();
    for (const RoundRecord& r : fed.rounds)
      rounds_accuracy.push_back(r.accuracy ? Json(*r.accuracy) : Json(nullptr));

    Json metrics{
        {"format_version", kFormatVersion},
        {"kind", "metrics"},
        {"config", metrics_config_json(cfg)},
        {"data",
         Json{{"train_examples", data.tailed.size()},
              {"train_class_counts", train_counts},
              {"test_examples", data.test.size()},
              {"teacher_examples", data.teacher_data.size()},
              {"server_examples", data.server_data.size()}}},
        {"teacher",
         Json{{"holdout_accuracy", bundle.metadata.holdout_accuracy}}},
        {"pretrain", pretrain_metrics},
        {"federated",
         Json{{"rounds", fed.rounds.size()},
              {"round_accuracy", rounds_accuracy}}},
        {"align", align_metrics},
        {"final", Json{{"accuracy", eres.accuracy},
                       {"groups", group_accuracy_json(groups)},
                       {"confusion", confusion_json(eres.confusion)}}}};

    write_json_file((dir / "metrics.json").string(), metrics);
    artifacts["metrics"] = "metrics.json";
    write_text_file((dir / "confusion.csv").string(),
                    confusion_csv(eres.confusion));
    artifacts["confusion_csv"] = "confusion.csv";
    write_text_file((dir / "confusion_normalized.csv").string(),
                    normalized_confusion_csv(norm));
    artifacts["confusion_normalized_csv"] = "confusion_normalized.csv";
    write_text_file((dir / "rounds.csv").string(), rounds_csv(fed.rounds));
    artifacts["rounds_csv"] = "rounds.csv";
    clock.lap("eval");

    Json manifest = base_manifest(cfg);
    manifest["status"] = "complete";
    manifest["artifacts"] = artifacts;
    manifest["timings_seconds"] = clock.timings;
    write_json_file((dir / "manifest.json").string(), manifest);

    PipelineResult result;
    result.manifest = std::move(manifest);
    result.metrics = std::move(metrics);
    result.rounds = std::move(fed.rounds);
    result.final_params = std::move(final_params);
    result.output_dir = out_dir;
    return result;
  } catch (const std::exception& e) {
    throw fail(e);
  }
}

// --- comparison ---------------------------------------------------------

namespace {

Json load_metrics_for(const std::string& manifest_path) {
  Json manifest = read_json_file(manifest_path);
  if (!manifest.is_object() ||
      manifest.value("kind", std::string()) != "run_manifest")
    throw std::runtime_error("compare_runs: " + manifest_path +
                             " is not a run manifest");
  if (manifest.value("status", std::string()) != "complete")
    throw std::runtime_error("compare_runs: " + manifest_path +
                             " is from an incomplete run");
  const std::string rel =
      manifest.at("artifacts").at("metrics").get<std::string>();
  const fs::path dir = fs::path(manifest_path).parent_path();
  return read_json_file((dir / rel).string());
}

const char* sign_of(double delta) {
  if (delta > 0.0) return "+";
  if (delta < 0.0) return "-";
  return "=";
}

// Per-class accuracy from the stored confusion counts; null for empty rows.
std::vector<std::optional<double>> per_class_accuracy(const Json& metrics) {
  const Json& cm = metrics.at("final").at("confusion");
  const std::size_t k = cm.at("classes").get<std::size_t>();
  std::vector<std::optional<double>> acc(k);
  for (std::size_t t = 0; t < k; ++t) {
    const Json& row = cm.at("counts").at(t);
    std::uint64_t total = 0;
    for (std::size_t p = 0; p < k; ++p) total += row.at(p).get<std::uint64_t>();
    if (total > 0)
      acc[t] = static_cast<double>(row.at(t).get<std::uint64_t>()) /
               static_cast<double>(total);
  }
  return acc;
}

Json delta_entry(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b)
    return Json{{"a", a ? Json(*a) : Json(nullptr)},
                {"b", b ? Json(*b) : Json(nullptr)},
                {"delta", nullptr},
                {"sign", "n/a"}};
  const double d = *b - *a;
  return Json{{"a", *a}, {"b", *b}, {"delta", d}, {"sign", sign_of(d)}};
}

std::optional<double> opt_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

Json compare_runs(const std::string& manifest_a_path,
                  const std::string& manifest_b_path) {
  Json ma = load_metrics_for(manifest_a_path);
  Json mb = load_metrics_for(manifest_b_path);

  const std::size_t ka =
      ma.at("final").at("confusion").at("classes").get<std::size_t>();
  const std::size_t kb =
      mb.at("final").at("confusion").at("classes").get<std::size_t>();
  if (ka != kb)
    throw std::runtime_error("compare_runs: class count mismatch (" +
                             std::to_string(ka) + " vs " + std::to_string(kb) +
                             ")");
  if (ma.at("config").at("eval") != mb.at("config").at("eval"))
    throw std::runtime_error(
        "compare_runs: the runs used different eval thresholds");

  const Json& ga = ma.at("final").at("groups");
  const Json& gb = mb.at("final").at("groups");

  Json groups;
  for (const char* name : {"all", "many", "medium", "few"})
    groups[name] = delta_entry(opt_from(ga.at(name)), opt_from(gb.at(name)));

  auto pa = per_class_accuracy(ma);
  auto pb = per_class_accuracy(mb);
  Json per_class = Json::array();
  for (std::size_t k = 0; k < ka; ++k) per_class.push_back(delta_entry(pa[k], pb[k]));

  return Json{{"kind", "compare_report"},
              {"a", manifest_a_path},
              {"b", manifest_b_path},
              {"accuracy",
               delta_entry(ma.at("final").at("accuracy").get<double>(),
                           mb.at("final").at("accuracy").get<double>())},
              {"groups", groups},
              {"per_class", per_class}};
}

std::string compare_report_text(const Json& report) {
  std::ostringstream out;
  auto line = [&out](const std::string& name, const Json& e) {
    out << "  " << name << ": ";
    if (e.at("delta").is_null()) {
      out << "n/a\n";
      return;
    }
    out << e.at("a").get<double>() << " -> " << e.at("b").get<double>()
        << "  (delta " << e.at("delta").get<double>() << ", "
        << e.at("sign").get<std::string>() << ")\n";
  };
  out << "a: " << report.at("a").get<std::string>() << "\n";
  out << "b: " << report.at("b").get<std::string>() << "\n";
  out << "overall\n";
  line("accuracy", report.at("accuracy"));
  out << "groups\n";
  for (const char* name : {"all", "many", "medium", "few"})
    line(name, report.at("groups").at(name));
  out << "per-class\n";
  const Json& pc = report.at("per_class");
  for (std::size_t k = 0; k < pc.size(); ++k)
    line("class " + std::to_string(k), pc.at(k));
  return out.str();
}

namespace {

void apply_thread_setting(const ExperimentConfig& cfg) {
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(static_cast<int>(cfg.threads));
#else
  (void)cfg;
#endif
}

}  // namespace

}  // namespace fedsim
