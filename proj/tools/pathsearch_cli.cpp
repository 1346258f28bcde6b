// Command-line front end for the synthetic slide search pipeline.
//
//   pathsearch generate      --out slides.txt [--config f] [--set k=v]... [--seed n]
//   pathsearch train-teacher --level 1|2 --out teacher.ckpt [--slides f] [--config f] [--set k=v]... [--seed n]
//   pathsearch train         --seed n --run-dir dir [--config f] [--set k=v]...
//   pathsearch evaluate      --seed n --run-dir dir
//   pathsearch ablate        --seeds 0,1,2,3,4 --out dir [--variants a,b] [--config f] [--set k=v]...
//   pathsearch bench         --seed n [--out dir] [--config f] [--set k=v]...

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pathsearch/checkpoint.hpp"
#include "pathsearch/experiment.hpp"

namespace fs = std::filesystem;
using namespace pathsearch;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config,-c", args.file, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "override one config key (key=value); repeatable");
}

ExperimentConfig build_config(const ConfigArgs& args) {
  ExperimentConfig cfg = args.file.empty() ? ExperimentConfig{} : load_config(args.file);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) cfg.seed = args.seed;
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_metrics(const char* label, const MetricsReport& m) {
  std::printf("%-22s acc %.4f  recall %.4f  precision %.4f  specificity %.4f  f1 %.4f  (tp %zu fp %zu tn %zu fn %zu)\n",
              label, m.accuracy, m.recall, m.precision, m.specificity, m.f1, m.confusion.tp, m.confusion.fp,
              m.confusion.tn, m.confusion.fn);
}

void print_efficiency(const EfficiencyReport& e) {
  std::printf("teacher passes/slide   guided %.2f +- %.2f  exhaustive %zu  fraction %.4f\n", e.guided_passes,
              e.guided_passes_std, e.exhaustive, e.fraction);
  std::printf("                       vs level-1 sweep %zu: %.4f   vs level-2 sweep %zu: %.4f\n", e.exhaustive_low,
              e.fraction_low, e.exhaustive_high, e.fraction_high);
  std::printf("                       distinct cells %.2f  zooms %.2f\n", e.distinct_cells, e.zooms);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

void save_models(const fs::path& dir, const PreparedData& data, const AgentModels& models) {
  save_checkpoint((dir / "teacher_l1.ckpt").string(), data.low.to_checkpoint());
  save_checkpoint((dir / "teacher_l2.ckpt").string(), data.high.to_checkpoint());
  save_checkpoint((dir / "policy.ckpt").string(), models.policy.to_checkpoint());
  save_checkpoint((dir / "decision.ckpt").string(), models.decision.to_checkpoint());
}

void report(const std::string& dir, const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  emit_reports(dir, runs);
  write_manifest(dir, cfg, runs);
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

int cmd_generate(const ConfigArgs& args, const std::string& out) {
  const ExperimentConfig cfg = build_config(args);
  const PreparedData data = prepare_dataset(cfg);
  ensure_parent(out);
  save_slides(out, data.slides);
  std::printf("wrote %zu slides to %s (train %zu, val %zu, test %zu)\n", data.slides.size(), out.c_str(),
              data.split.train.size(), data.split.val.size(), data.split.test.size());
  return 0;
}

int cmd_train_teacher(const ConfigArgs& args, int level, const std::string& slides_path, const std::string& out) {
  const ExperimentConfig cfg = build_config(args);
  PreparedData data = prepare_dataset(cfg);
  if (!slides_path.empty()) {
    data.slides = load_slides(slides_path);
    if (data.slides.size() != cfg.slides) {
      throw FormatError("slide file holds " + std::to_string(data.slides.size()) + " slides, config says " +
                        std::to_string(cfg.slides));
    }
  }
  const auto result = train_split_teacher(data, level == 1 ? Level::Low : Level::High);
  ensure_parent(out);
  save_checkpoint(out, result.model.to_checkpoint());
  std::printf("level-%d teacher: %zu bags, final loss %.6f, saved to %s\n", level, data.split.train.size(),
              result.loss_history.empty() ? 0.0 : result.loss_history.back(), out.c_str());
  return 0;
}

int cmd_train(const ConfigArgs& args, const std::string& run_dir) {
  const ExperimentConfig cfg = build_config(args);
  fs::create_directories(run_dir);
  const PreparedData data = prepare(cfg);
  TrainResult trained = train_agents(data, cfg);
  RunResult run = evaluate(data, cfg, trained.models);
  run.history = std::move(trained.history);
  save_models(run_dir, data, trained.models);
  write_text(fs::path(run_dir) / "config.txt", cfg.to_text());
  report(run_dir, cfg, {run});
  print_metrics("guided", run.test);
  print_metrics("exhaustive", run.baseline.metrics);
  print_efficiency(run.efficiency);
  return 0;
}

int cmd_evaluate(std::uint64_t seed, const std::string& run_dir) {
  const fs::path dir(run_dir);
  const ExperimentConfig cfg = load_config((dir / "config.txt").string());
  if (cfg.seed != seed) {
    throw ParameterError("run directory was trained with seed " + std::to_string(cfg.seed) + ", not " +
                         std::to_string(seed));
  }
  PreparedData data = prepare_dataset(cfg);
  data.low = TeacherModel::from_checkpoint(load_checkpoint((dir / "teacher_l1.ckpt").string()));
  data.high = TeacherModel::from_checkpoint(load_checkpoint((dir / "teacher_l2.ckpt").string()));
  const AgentModels models{PolicyParams::from_checkpoint(load_checkpoint((dir / "policy.ckpt").string())),
                           DecisionParams::from_checkpoint(load_checkpoint((dir / "decision.ckpt").string()))};
  const RunResult run = evaluate(data, cfg, models);
  report((dir / "evaluation").string(), cfg, {run});
  print_metrics("guided", run.test);
  print_metrics("exhaustive", run.baseline.metrics);
  print_efficiency(run.efficiency);
  return 0;
}

int cmd_ablate(const ConfigArgs& args, const std::string& seeds_arg, const std::string& variants_arg,
               const std::string& out) {
  const ExperimentConfig base = build_config(args);
  const auto variants = variants_arg.empty() ? variant_names() : split_list(variants_arg);
  for (const auto& v : variants) apply_variant(base, v);  // reject unknown names before any work
  std::vector<RunResult> runs;
  for (const auto& s : split_list(seeds_arg)) {
    ExperimentConfig cfg = base;
    cfg.set("seed", s);
    const PreparedData data = prepare(cfg);
    for (const auto& v : variants) {
      runs.push_back(run_ablation(data, v));
      std::printf("seed %-4s %-14s ", s.c_str(), v.c_str());
      print_metrics("", runs.back().test);
      std::fflush(stdout);
    }
  }
  // Group by variant so aggregate rows follow their seeds.
  std::vector<RunResult> ordered;
  for (const auto& v : variants) {
    for (const auto& r : runs) {
      if (r.variant == v) ordered.push_back(r);
    }
  }
  report(out, base, ordered);
  std::printf("\n%-14s %-17s %-17s %-17s %-17s %-17s\n", "variant", "accuracy", "recall", "precision", "specificity",
              "f1");
  for (const auto& v : variants) {
    std::vector<MetricsReport> reports;
    for (const auto& r : ordered) {
      if (r.variant == v) reports.push_back(r.test);
    }
    const MetricsSummary s = summarize(reports);
    std::printf("%-14s %.3f +- %.3f    %.3f +- %.3f    %.3f +- %.3f    %.3f +- %.3f    %.3f +- %.3f\n", v.c_str(),
                s.accuracy.mean, s.accuracy.std, s.recall.mean, s.recall.std, s.precision.mean, s.precision.std,
                s.specificity.mean, s.specificity.std, s.f1.mean, s.f1.std);
  }
  return 0;
}

int cmd_bench(const ConfigArgs& args, const std::string& out) {
  const ExperimentConfig cfg = build_config(args);
  const RunResult run = run_experiment(cfg);
  print_metrics("guided", run.test);
  print_metrics("exhaustive", run.baseline.metrics);
  print_efficiency(run.efficiency);
  std::printf("wall-clock per slide   guided %.6f s  exhaustive %.6f s  (training %.2f s)\n",
              run.timing.guided_seconds_per_slide, run.timing.exhaustive_seconds_per_slide, run.timing.train_seconds);
  if (!out.empty()) report(out, cfg, {run});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-guided search and diagnosis on synthetic two-level slides"};
  app.require_subcommand(1);

  ConfigArgs gen_args;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "generate the synthetic slide dataset");
  add_config_options(gen, gen_args);
  gen->add_option("--seed", gen_args.seed, "master seed");
  gen->add_option("--out,-o", gen_out, "slide file to write")->required();

  ConfigArgs teacher_args;
  int level = 1;
  std::string teacher_slides, teacher_out;
  auto* teach = app.add_subcommand("train-teacher", "train one MIL teacher on the training split");
  add_config_options(teach, teacher_args);
  teach->add_option("--seed", teacher_args.seed, "master seed");
  teach->add_option("--level", level, "pyramid level")->check(CLI::IsMember({1, 2}))->required();
  teach->add_option("--slides", teacher_slides, "slide file from `generate` (default: regenerate)")
      ->check(CLI::ExistingFile);
  teach->add_option("--out,-o", teacher_out, "checkpoint to write")->required();

  ConfigArgs train_args;
  std::string train_dir;
  auto* train = app.add_subcommand("train", "train teachers and both agents, then evaluate");
  add_config_options(train, train_args);
  train->add_option("--seed", train_args.seed, "master seed")->required();
  train->add_option("--run-dir", train_dir, "output directory")->required();

  std::uint64_t eval_seed = 0;
  std::string eval_dir;
  auto* eval = app.add_subcommand("evaluate", "re-evaluate a trained run directory on its test split");
  eval->add_option("--seed", eval_seed, "master seed the run was trained with")->required();
  eval->add_option("--run-dir", eval_dir, "directory written by `train`")->required()->check(CLI::ExistingDirectory);

  ConfigArgs ablate_args;
  std::string seeds, variants, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "run ablation variants over several seeds");
  add_config_options(ablate, ablate_args);
  ablate->add_option("--seeds", seeds, "comma-separated master seeds")->required();
  ablate->add_option("--variants", variants, "comma-separated variants (default: all)");
  ablate->add_option("--out,-o", ablate_out, "report directory")->required();

  ConfigArgs bench_args;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "compare guided and exhaustive teacher passes");
  add_config_options(bench, bench_args);
  bench->add_option("--seed", bench_args.seed, "master seed")->required();
  bench->add_option("--out,-o", bench_out, "optional report directory");

  CLI11_PARSE(app, argc, argv);
  for (auto* args : {&gen_args, &teacher_args, &train_args, &bench_args}) args->seed_given = false;
  gen_args.seed_given = gen->count("--seed") > 0;
  teacher_args.seed_given = teach->count("--seed") > 0;
  train_args.seed_given = true;
  bench_args.seed_given = true;

  try {
    if (*gen) return cmd_generate(gen_args, gen_out);
    if (*teach) return cmd_train_teacher(teacher_args, level, teacher_slides, teacher_out);
    if (*train) return cmd_train(train_args, train_dir);
    if (*eval) return cmd_evaluate(eval_seed, eval_dir);
    if (*ablate) return cmd_ablate(ablate_args, seeds, variants, ablate_out);
    if (*bench) return cmd_bench(bench_args, bench_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
