#pragma once

// Experiment orchestration: dataset, teachers, joint agent training,
// evaluation against an exhaustive sweep, ablation variants and reports.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pathsearch/decision_agent.hpp"
#include "pathsearch/metrics.hpp"
#include "pathsearch/search_agent.hpp"
#include "pathsearch/slide.hpp"
#include "pathsearch/teacher.hpp"

namespace pathsearch {

// Plain-text config: one `key = value` per line, `#` starts a comment.
// Keys (defaults in parentheses):
//   seed (0)                     master seed; every random stream derives from it
//   slides (100)                 dataset size, half tumor, half benign
//   split_train/val/test (0.6/0.2/0.2)
//   grid_width, grid_height (16), feature_dim (16), class_separation (4),
//   noise_sigma (1), tumor_fraction_min (0.1), tumor_fraction_max (0.3)
//   teacher_hidden (32; comma list), teacher_top_k (8), teacher_bag_size (64),
//   teacher_bag_size_high (256), teacher_epochs (150), teacher_lr (0.001)
//   episodes (150)               training episodes per training slide
//   steps (0 = width * height)   moves per episode
//   gamma (0.9), agent_lr (0.001), credit (immediate | return_to_go),
//   baseline (0 | 1), baseline_decay (0.95)
//   decision_lr (0.001), temperature (5), epsilon (0.8)
//   use_lstm (1), use_fc1 (1), zoom (1), zoom_child (max | mean | first)
//   aggregation (any_zoomed_tumor | fraction), vote_threshold (0.5)
//   baseline_level (2)           grid the exhaustive comparator sweeps
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t slides = 100;
  double split_train = 0.6;
  double split_val = 0.2;
  double split_test = 0.2;
  GeneratorConfig generator;
  TeacherConfig teacher;            // bag_size applies to level 1
  std::size_t teacher_bag_size_high = 256;
  std::size_t episodes = 150;
  std::size_t steps = 0;
  ReinforceConfig agent;
  double decision_lr = 1e-3;
  DistillConfig distill;
  PolicyConfig policy;
  bool zoom = true;
  ZoomChild zoom_child = ZoomChild::Max;
  AggregationRule aggregation = AggregationRule::AnyZoomedTumor;
  double vote_threshold = 0.5;
  Level baseline_level = Level::High;

  void validate() const;
  /// Sets one key; throws FormatError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Canonical text form: every key, fixed order, full precision.
  std::string to_text() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// FNV-1a over the canonical text form.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t hash);

/// Keys whose canonical values differ, in canonical order.
std::vector<std::string> config_diff(const ExperimentConfig& a, const ExperimentConfig& b);

/// "full", "o-De-KLdiv", "o-De-CE", "o-Se-LSTM", "o-Se-FC1", "o-Se-10x",
/// "o-Se-FC1&10x", "o-Se-LSTM&10x".
const std::vector<std::string>& variant_names();
ExperimentConfig apply_variant(ExperimentConfig cfg, const std::string& variant);

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;  // indices into the slide list
};

/// Shuffles indices with `seed` and cuts them by the configured fractions.
DatasetSplit split_dataset(std::size_t count, double train, double val, std::uint64_t seed);

/// Dataset and both teachers for one master seed. Independent of every
/// agent-side switch, so it is shared across ablation variants.
struct PreparedData {
  ExperimentConfig config;
  std::vector<SlidePyramid> slides;
  DatasetSplit split;
  TeacherModel low;
  TeacherModel high;
  std::vector<double> low_loss;
  std::vector<double> high_loss;
};

/// Dataset and split only; the teachers are left untrained.
PreparedData prepare_dataset(const ExperimentConfig& cfg);
/// Trains the teacher of one level on the training split of `data`.
TeacherTrainResult train_split_teacher(const PreparedData& data, Level level);
/// prepare_dataset plus both teachers trained on the training split.
PreparedData prepare(const ExperimentConfig& cfg);

struct AgentModels {
  PolicyParams policy;
  DecisionParams decision;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_return = 0.0;
  double mean_decision_loss = 0.0;
  double tumor_visit_rate = 0.0;  // over tumor slides
  double zoom_rate = 0.0;
};

struct TrainResult {
  AgentModels models;
  std::vector<EpochStats> history;
};

/// Trains SeAgent and DeAgent jointly: every episode's rollout feeds one
/// policy update and one distillation update.
TrainResult train_agents(const PreparedData& data, const ExperimentConfig& cfg);

/// Same loop over caller-supplied environment views (e.g. oracle scorers).
TrainResult train_agents(std::span<ScoredSlide> views, const ExperimentConfig& cfg);

struct EfficiencyReport {
  std::size_t slides = 0;
  double guided_passes = 0.0;  // mean teacher forward passes per slide
  double guided_passes_std = 0.0;
  std::size_t exhaustive_low = 0;   // passes per slide for a full level-1 sweep
  std::size_t exhaustive_high = 0;  // and for a full level-2 sweep
  std::size_t exhaustive = 0;       // the configured comparator
  double fraction = 0.0;            // guided / exhaustive
  double fraction_low = 0.0;
  double fraction_high = 0.0;
  double distinct_cells = 0.0;      // mean distinct level-1 cells visited
  double zooms = 0.0;               // mean zoomed steps
};

struct BaselineResult {
  Level level = Level::Low;
  MetricsReport metrics;
  std::size_t passes = 0;  // total over the slides
  std::vector<int> predictions;
};

/// Scores every cell of each slide at the scorer's level; a slide is tumor
/// when any cell is.
BaselineResult exhaustive_baseline(std::span<const SlidePyramid> slides, const CellScorer& scorer);

struct Timing {
  double guided_seconds_per_slide = 0.0;
  double exhaustive_seconds_per_slide = 0.0;
  double train_seconds = 0.0;
};

struct RunResult {
  std::string variant = "full";
  ExperimentConfig config;
  MetricsReport test;
  BaselineResult baseline;
  EfficiencyReport efficiency;
  std::vector<Trajectory> trajectories;  // test-split inference rollouts
  std::vector<SlideVerdict> verdicts;
  std::vector<EpochStats> history;
  Timing timing;  // wall-clock; reported separately from the deterministic files
};

/// Guided inference on the test split plus the exhaustive comparator.
RunResult evaluate(const PreparedData& data, const ExperimentConfig& cfg, const AgentModels& models);

/// prepare + train + evaluate. `data` may be reused across configs that
/// differ only in agent-side keys.
RunResult run_experiment(const PreparedData& data, const ExperimentConfig& cfg, const std::string& variant = "full");
RunResult run_experiment(const ExperimentConfig& cfg);

/// Runs `variant` on the configuration and returns its test metrics.
MetricsReport run_ablation(const ExperimentConfig& cfg, const std::string& variant);
RunResult run_ablation(const PreparedData& data, const std::string& variant);

// Reports. Numbers are written with 17 significant digits so metrics
// recomputed from the emitted confusion counts match exactly.
//
// metrics.csv:
//   variant,seed,kind,tp,fp,tn,fn,recall,precision,specificity,f1,accuracy,undefined
// kind is "guided" or "exhaustive_l<level>"; aggregate rows use seed "mean"
// and "std" and leave the counts empty.
// efficiency.csv:
//   variant,seed,slides,guided_passes,guided_passes_std,exhaustive_passes,
//   exhaustive_low,exhaustive_high,fraction,fraction_low,fraction_high,
//   distinct_cells,zooms
// training.csv: variant,seed,epoch,mean_return,mean_decision_loss,tumor_visit_rate,zoom_rate
// timing.csv: wall-clock seconds (not reproducible byte for byte).
// trajectories.jsonl / verdicts.jsonl: one record per step / slide.
void write_metrics_csv(std::ostream& out, std::span<const RunResult> runs);
void write_efficiency_csv(std::ostream& out, std::span<const RunResult> runs);
void write_training_csv(std::ostream& out, std::span<const RunResult> runs);
void write_timing_csv(std::ostream& out, std::span<const RunResult> runs);
void emit_reports(const std::string& dir, std::span<const RunResult> runs);

/// manifest.txt: tool version, config hash, variant list and seeds, followed
/// by the canonical config.
void write_manifest(const std::string& dir, const ExperimentConfig& cfg, std::span<const RunResult> runs);

inline constexpr const char* kVersion = "1.0.0";

}  // namespace pathsearch
