#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedsim/pipeline.hpp"

namespace {

void print_run_summary(const fedsim::PipelineResult& result) {
  const fedsim::Json& final = result.metrics.at("final");
  std::cout << "output: " << result.output_dir << "\n";
  std::cout << "final accuracy: " << final.at("accuracy").get<double>() << "\n";
  const fedsim::Json& groups = final.at("groups");
  for (const char* name : {"many", "medium", "few"}) {
    std::cout << name << ": ";
    if (groups.at(name).is_null())
      std::cout << "n/a\n";
    else
      std::cout << groups.at(name).get<double>() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Deterministic simulator of teacher-assisted federated learning on "
      "long-tailed, heterogeneously partitioned data"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;
  std::size_t threads = 0;
  std::string out_dir, pretrain_toggle, align_toggle, execution;
  double beta = 0.0;

  CLI::App* run = app.add_subcommand(
      "run", "Run the full pipeline from a config file (or re-run a manifest)");
  run->add_option("config", config_path, "config or manifest JSON path")
      ->required();
  CLI::Option* o_seed = run->add_option("--seed", seed, "root seed override");
  CLI::Option* o_rounds =
      run->add_option("--rounds", rounds, "federated rounds override");
  CLI::Option* o_out =
      run->add_option("--out", out_dir, "output directory override");
  CLI::Option* o_pre = run->add_option("--pretrain", pretrain_toggle,
                                       "enable or disable pretraining")
                           ->check(CLI::IsMember({"on", "off"}));
  CLI::Option* o_align =
      run->add_option("--align", align_toggle, "enable or disable alignment")
          ->check(CLI::IsMember({"on", "off"}));
  CLI::Option* o_beta =
      run->add_option("--beta", beta, "teacher-matching weight override");
  CLI::Option* o_threads =
      run->add_option("--threads", threads, "worker thread count");
  CLI::Option* o_exec =
      run->add_option("--execution", execution, "kernel execution mode")
          ->check(CLI::IsMember({"serial", "parallel"}));

  std::string tt_config;
  std::uint64_t tt_seed = 0;
  std::string tt_out;
  CLI::App* teacher_train = app.add_subcommand(
      "teacher-train", "Train and save only the frozen teacher bundle");
  teacher_train->add_option("config", tt_config, "config JSON path")
      ->required();
  CLI::Option* o_tt_seed =
      teacher_train->add_option("--seed", tt_seed, "root seed override");
  CLI::Option* o_tt_out =
      teacher_train->add_option("--out", tt_out, "output directory override");

  std::string manifest_a, manifest_b;
  CLI::App* compare = app.add_subcommand(
      "compare", "Diff final metrics of two completed runs");
  compare->add_option("manifest_a", manifest_a, "first run manifest")
      ->required();
  compare->add_option("manifest_b", manifest_b, "second run manifest")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run)) {
      fedsim::ExperimentConfig cfg = fedsim::load_config(config_path);
      if (*o_seed) cfg.seed = seed;
      if (*o_rounds) cfg.federated.rounds = rounds;
      if (*o_out) cfg.output_dir = out_dir;
      if (*o_pre) cfg.pretrain.enabled = pretrain_toggle == "on";
      if (*o_align) cfg.align.enabled = align_toggle == "on";
      if (*o_beta) cfg.align.beta = beta;
      if (*o_threads) cfg.threads = threads;
      if (*o_exec) cfg.execution = execution;
      fedsim::validate(cfg);
      fedsim::PipelineResult result = fedsim::run_pipeline(cfg);
      print_run_summary(result);
      return 0;
    }
    if (app.got_subcommand(teacher_train)) {
      fedsim::ExperimentConfig cfg = fedsim::load_config(tt_config);
      if (*o_tt_seed) cfg.seed = tt_seed;
      if (*o_tt_out) cfg.output_dir = tt_out;
      fedsim::validate(cfg);
      fedsim::TeacherBundle bundle = fedsim::run_teacher_training(cfg);
      std::cout << "teacher holdout accuracy: "
                << bundle.metadata.holdout_accuracy << "\n";
      std::cout << "output: "
                << fedsim::resolve_output_dir(cfg.output_dir) << "\n";
      return 0;
    }
    if (app.got_subcommand(compare)) {
      fedsim::Json report = fedsim::compare_runs(manifest_a, manifest_b);
      std::cout << fedsim::compare_report_text(report);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
