#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pathsearch/errors.hpp"
#include "pathsearch/experiment.hpp"

using namespace pathsearch;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Quick configuration: small grids, short training.
ExperimentConfig tiny_config(std::uint64_t seed = 0) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.slides = 20;
  cfg.generator.width = 6;
  cfg.generator.height = 6;
  cfg.generator.feature_dim = 8;
  cfg.teacher.bag_size = 16;
  cfg.teacher_bag_size_high = 32;
  cfg.teacher.epochs = 20;
  cfg.episodes = 3;
  return cfg;
}

class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new PreparedData(prepare(tiny_config())); }
  static void TearDownTestSuite() { delete data_; }
  static PreparedData* data_;
};

PreparedData* TinyRun::data_ = nullptr;

}  // namespace

TEST(ComputeMetrics, Examples) {
  auto perfect = compute_metrics({10, 0, 10, 0});
  for (double m : {perfect.recall, perfect.precision, perfect.specificity, perfect.f1, perfect.accuracy})
    EXPECT_DOUBLE_EQ(m, 1.0);

  auto m = compute_metrics({9, 1, 9, 1});
  EXPECT_DOUBLE_EQ(m.recall, 0.9);
  EXPECT_DOUBLE_EQ(m.precision, 0.9);
  EXPECT_DOUBLE_EQ(m.specificity, 0.9);
  EXPECT_NEAR(m.f1, 0.9, 1e-15);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.9);

  auto degenerate = compute_metrics({0, 0, 5, 5});
  EXPECT_EQ(degenerate.precision, 0.0);
  EXPECT_TRUE(degenerate.precision_undefined);
  EXPECT_TRUE(degenerate.f1_undefined);
  EXPECT_FALSE(degenerate.recall_undefined);
  EXPECT_THROW(compute_metrics({0, 0, 0, 0}), ParameterError);
}

TEST(ComputeMetrics, MatchesFormulasOnRandomCounts) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> count(0, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    Confusion c{count(rng), count(rng), count(rng), count(rng)};
    if (c.total() == 0) continue;
    auto m = compute_metrics(c);
    const double tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
    const double r = tp + fn ? tp / (tp + fn) : 0.0, p = tp + fp ? tp / (tp + fp) : 0.0;
    EXPECT_DOUBLE_EQ(m.recall, r);
    EXPECT_DOUBLE_EQ(m.precision, p);
    EXPECT_DOUBLE_EQ(m.specificity, tn + fp ? tn / (tn + fp) : 0.0);
    EXPECT_DOUBLE_EQ(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0);
    EXPECT_DOUBLE_EQ(m.accuracy, (tp + tn) / (tp + fp + tn + fn));
  }
}

TEST(ComputeMetrics, TallyCountsEachCell) {
  std::vector<int> truth{1, 1, 0, 0, 1}, pred{1, 0, 1, 0, 1};
  EXPECT_EQ(tally(truth, pred), (Confusion{2, 1, 1, 1}));
}

TEST(Summary, MeanStdAndMedian) {
  std::vector<double> v{1.0, 2.0, 4.0};
  auto s = mean_std(v);
  EXPECT_DOUBLE_EQ(s.mean, 7.0 / 3.0);
  const double var = ((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) + (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2;
  EXPECT_NEAR(s.std, std::sqrt(var), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{5.0}).std, 0.0);
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(Config, TextRoundTripAndHash) {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.distill.epsilon = 0.3;
  cfg.aggregation = AggregationRule::Fraction;
  cfg.teacher.hidden = {16, 8};
  std::stringstream text(cfg.to_text());
  auto back = parse_config(text);
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_NE(config_hash(ExperimentConfig{}), config_hash(cfg));
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
}

TEST(Config, ParsesCommentsAndRejectsUnknownKeys) {
  std::stringstream in("# header\nseed = 3   # trailing\n\nepisodes=12\ncredit = return_to_go\n");
  auto cfg = parse_config(in);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.episodes, 12u);
  EXPECT_EQ(cfg.agent.credit, CreditMode::ReturnToGo);
  ExperimentConfig c;
  EXPECT_THROW(c.set("learning_rate", "1"), FormatError);
  EXPECT_THROW(c.set("episodes", "many"), FormatError);
}

TEST(Config, ValidatesSplit) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.split_test = 0.3;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Variants, ConfigDiffAudit) {
  const ExperimentConfig base;
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected{
      {"full", {}},
      {"o-De-KLdiv", {"epsilon"}},
      {"o-De-CE", {"epsilon"}},
      {"o-Se-LSTM", {"use_lstm"}},
      {"o-Se-FC1", {"use_fc1"}},
      {"o-Se-10x", {"zoom"}},
      {"o-Se-FC1&10x", {"use_fc1", "zoom"}},
      {"o-Se-LSTM&10x", {"use_lstm", "zoom"}},
  };
  ASSERT_EQ(variant_names().size(), expected.size());
  for (const auto& [name, keys] : expected) EXPECT_EQ(config_diff(base, apply_variant(base, name)), keys) << name;
  EXPECT_EQ(apply_variant(base, "o-De-KLdiv").distill.epsilon, 0.0);
  EXPECT_EQ(apply_variant(base, "o-De-CE").distill.epsilon, 1.0);
  EXPECT_THROW(apply_variant(base, "o-Se-everything"), ParameterError);
}

TEST(Split, SixtyTwentyTwenty) {
  auto s = split_dataset(100, 0.6, 0.2, 5);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.val.size(), 20u);
  EXPECT_EQ(s.test.size(), 20u);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(*all.rbegin(), 99u);
  auto again = split_dataset(100, 0.6, 0.2, 5);
  EXPECT_EQ(again.test, s.test);
}

TEST(ExhaustiveBaseline, CountsEveryCellAndOracleIsPerfect) {
  GeneratorConfig g;
  g.width = 7;
  g.height = 5;
  g.feature_dim = 4;
  auto slides = generate_dataset(g, 10);
  MaskOracle low(Level::Low, 4), high(Level::High, 4);
  auto lo = exhaustive_baseline(slides, low);
  EXPECT_EQ(lo.passes, 10u * 7u * 5u);
  EXPECT_DOUBLE_EQ(lo.metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(lo.metrics.f1, 1.0);
  auto hi = exhaustive_baseline(slides, high);
  EXPECT_EQ(hi.passes, 10u * 4u * 7u * 5u);
  EXPECT_DOUBLE_EQ(hi.metrics.specificity, 1.0);
}

TEST_F(TinyRun, TrainingRejectsDataKeyChanges) {
  auto cfg = data_->config;
  cfg.generator.noise_sigma = 2.0;
  EXPECT_THROW(train_agents(*data_, cfg), ContractError);
  cfg = apply_variant(data_->config, "o-Se-LSTM");
  cfg.episodes = 1;
  EXPECT_NO_THROW(train_agents(*data_, cfg));
}

TEST_F(TinyRun, EfficiencyAccounting) {
  auto run = run_experiment(*data_, data_->config);
  const auto& e = run.efficiency;
  EXPECT_EQ(e.slides, data_->split.test.size());
  EXPECT_EQ(e.exhaustive_low, 36u);
  EXPECT_EQ(e.exhaustive_high, 144u);
  EXPECT_EQ(e.exhaustive, e.exhaustive_high);
  EXPECT_EQ(run.baseline.passes, e.slides * e.exhaustive_high);
  double passes = 0.0;
  for (const auto& t : run.trajectories) passes += static_cast<double>(t.teacher_passes);
  EXPECT_NEAR(e.guided_passes, passes / e.slides, 1e-12);
  EXPECT_NEAR(e.fraction, e.guided_passes / e.exhaustive, 1e-15);
  EXPECT_NEAR(e.fraction_low, e.guided_passes / e.exhaustive_low, 1e-15);
  EXPECT_EQ(run.verdicts.size(), e.slides);
  EXPECT_EQ(run.history.size(), data_->config.episodes);
}

TEST_F(TinyRun, IdenticalRunsGiveByteIdenticalReports) {
  std::vector<RunResult> a{run_experiment(*data_, data_->config)};
  std::vector<RunResult> b{run_experiment(prepare(tiny_config()), tiny_config())};
  std::stringstream ma, mb, ea, eb, ta, tb;
  write_metrics_csv(ma, a);
  write_metrics_csv(mb, b);
  write_efficiency_csv(ea, a);
  write_efficiency_csv(eb, b);
  write_training_csv(ta, a);
  write_training_csv(tb, b);
  EXPECT_EQ(ma.str(), mb.str());
  EXPECT_EQ(ea.str(), eb.str());
  EXPECT_EQ(ta.str(), tb.str());
}

TEST_F(TinyRun, MetricsCsvRecomputesFromCounts) {
  std::vector<RunResult> runs;
  for (const auto& v : {"full", "o-Se-10x"}) runs.push_back(run_ablation(*data_, v));
  std::stringstream out;
  write_metrics_csv(out, runs);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "variant,seed,kind,tp,fp,tn,fn,recall,precision,specificity,f1,accuracy,undefined");
  int rows = 0;
  while (std::getline(out, line)) {
    auto cells = split_csv(line);
    ASSERT_EQ(cells.size(), 13u) << line;
    if (cells[1] == "mean" || cells[1] == "std") continue;
    ++rows;
    const double tp = std::stod(cells[3]), fp = std::stod(cells[4]), tn = std::stod(cells[5]), fn = std::stod(cells[6]);
    const double r = tp + fn ? tp / (tp + fn) : 0.0, p = tp + fp ? tp / (tp + fp) : 0.0;
    EXPECT_EQ(cells[7], fmt17(r));
    EXPECT_EQ(cells[8], fmt17(p));
    EXPECT_EQ(cells[9], fmt17(tn + fp ? tn / (tn + fp) : 0.0));
    EXPECT_EQ(cells[10], fmt17(p + r > 0 ? 2 * p * r / (p + r) : 0.0));
    EXPECT_EQ(cells[11], fmt17((tp + tn) / (tp + fp + tn + fn)));
  }
  EXPECT_EQ(rows, 4);
}

TEST_F(TinyRun, EmitReportsWritesEveryArtifact) {
  auto dir = std::filesystem::temp_directory_path() / "pathsearch_harness_test";
  std::filesystem::remove_all(dir);
  std::vector<RunResult> runs{run_ablation(*data_, "o-Se-LSTM&10x")};
  emit_reports(dir.string(), runs);
  write_manifest(dir.string(), data_->config, runs);
  for (const char* f : {"metrics.csv", "efficiency.csv", "training.csv", "timing.csv", "manifest.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto run_dir = dir / "runs" / "o-Se-LSTM+10x" / "seed-0";
  EXPECT_TRUE(std::filesystem::exists(run_dir / "trajectories.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(run_dir / "verdicts.jsonl"));
  std::ifstream manifest(dir / "manifest.txt");
  std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find(hash_hex(config_hash(data_->config))), std::string::npos);
  std::filesystem::remove_all(dir);
}
