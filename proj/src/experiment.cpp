#include "pathsearch/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pathsearch/errors.hpp"

namespace pathsearch {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw FormatError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw FormatError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw FormatError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string zoom_child_name(ZoomChild z) {
  switch (z) {
    case ZoomChild::Mean: return "mean";
    case ZoomChild::First: return "first";
    case ZoomChild::Max:
    default: return "max";
  }
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  return out;
}

std::string sizes_text(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::pair<std::string, std::string>> canonical(const ExperimentConfig& c) {
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  auto u = [](std::size_t v) { return std::to_string(v); };
  return {
      {"seed", std::to_string(c.seed)},
      {"slides", u(c.slides)},
      {"split_train", fmt(c.split_train)},
      {"split_val", fmt(c.split_val)},
      {"split_test", fmt(c.split_test)},
      {"grid_width", u(c.generator.width)},
      {"grid_height", u(c.generator.height)},
      {"feature_dim", u(c.generator.feature_dim)},
      {"class_separation", fmt(c.generator.class_separation)},
      {"noise_sigma", fmt(c.generator.noise_sigma)},
      {"tumor_fraction_min", fmt(c.generator.tumor_fraction_min)},
      {"tumor_fraction_max", fmt(c.generator.tumor_fraction_max)},
      {"teacher_hidden", sizes_text(c.teacher.hidden)},
      {"teacher_top_k", u(c.teacher.top_k)},
      {"teacher_bag_size", u(c.teacher.bag_size)},
      {"teacher_bag_size_high", u(c.teacher_bag_size_high)},
      {"teacher_epochs", u(c.teacher.epochs)},
      {"teacher_lr", fmt(c.teacher.lr)},
      {"episodes", u(c.episodes)},
      {"steps", u(c.steps)},
      {"gamma", fmt(c.agent.gamma)},
      {"agent_lr", fmt(c.agent.lr)},
      {"credit", c.agent.credit == CreditMode::Immediate ? "immediate" : "return_to_go"},
      {"baseline", b(c.agent.baseline)},
      {"baseline_decay", fmt(c.agent.baseline_decay)},
      {"decision_lr", fmt(c.decision_lr)},
      {"temperature", fmt(c.distill.temperature)},
      {"epsilon", fmt(c.distill.epsilon)},
      {"use_lstm", b(c.policy.use_lstm)},
      {"use_fc1", b(c.policy.use_fc1)},
      {"zoom", b(c.zoom)},
      {"zoom_child", zoom_child_name(c.zoom_child)},
      {"aggregation", to_string(c.aggregation)},
      {"vote_threshold", fmt(c.vote_threshold)},
      {"baseline_level", std::to_string(static_cast<int>(c.baseline_level))},
  };
}

// Keys that shape the dataset and the teachers; variants must not touch them.
const std::vector<std::string>& data_keys() {
  static const std::vector<std::string> keys{
      "seed",         "slides",           "split_train",       "split_val",          "split_test",
      "grid_width",   "grid_height",      "feature_dim",       "class_separation",   "noise_sigma",
      "tumor_fraction_min", "tumor_fraction_max", "teacher_hidden", "teacher_top_k", "teacher_bag_size",
      "teacher_bag_size_high",
      "teacher_epochs", "teacher_lr"};
  return keys;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Random-stream identifiers under the master seed.
enum Stream : std::uint64_t {
  kGenerator = 0,
  kSplit = 1,
  kLowBags = 2,
  kHighBags = 3,
  kLowTeacher = 4,
  kHighTeacher = 5,
  kAgentInit = 6,
  kAgentTrain = 7,
  kInference = 8,
};

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  generator.validate();
  distill.validate();
  if (slides < 2) throw ParameterError("need at least two slides");
  for (double f : {split_train, split_val, split_test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("split fractions must lie in [0, 1]");
  }
  if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9) {
    throw ParameterError("split fractions must sum to 1");
  }
  if (!(agent.gamma >= 0.0 && agent.gamma <= 1.0)) throw ParameterError("gamma must lie in [0, 1]");
  if (!(agent.lr > 0.0) || !(decision_lr > 0.0) || !(teacher.lr > 0.0)) {
    throw ParameterError("learning rates must be positive");
  }
  if (!(agent.baseline_decay >= 0.0 && agent.baseline_decay < 1.0)) {
    throw ParameterError("baseline_decay must lie in [0, 1)");
  }
  if (!policy.use_lstm && !policy.use_fc1) throw ParameterError("policy needs the LSTM branch, FC1 branch, or both");
  if (teacher.hidden.empty()) throw ParameterError("teacher needs at least one hidden layer");
  if (teacher.top_k == 0 || teacher.bag_size == 0) throw ParameterError("teacher top_k and bag_size must be positive");
  if (teacher.bag_size > generator.width * generator.height) {
    throw ParameterError("teacher bag size exceeds the level-1 grid");
  }
  if (teacher_bag_size_high == 0 || teacher_bag_size_high > 4 * generator.width * generator.height) {
    throw ParameterError("level-2 teacher bag size must lie in [1, level-2 cell count]");
  }
  if (!(vote_threshold >= 0.0 && vote_threshold <= 1.0)) throw ParameterError("vote_threshold must lie in [0, 1]");
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "seed") seed = to_u64(key, v);
  else if (key == "slides") slides = to_u64(key, v);
  else if (key == "split_train") split_train = to_double(key, v);
  else if (key == "split_val") split_val = to_double(key, v);
  else if (key == "split_test") split_test = to_double(key, v);
  else if (key == "grid_width") generator.width = to_u64(key, v);
  else if (key == "grid_height") generator.height = to_u64(key, v);
  else if (key == "feature_dim") generator.feature_dim = to_u64(key, v);
  else if (key == "class_separation") generator.class_separation = to_double(key, v);
  else if (key == "noise_sigma") generator.noise_sigma = to_double(key, v);
  else if (key == "tumor_fraction_min") generator.tumor_fraction_min = to_double(key, v);
  else if (key == "tumor_fraction_max") generator.tumor_fraction_max = to_double(key, v);
  else if (key == "teacher_hidden") teacher.hidden = to_sizes(key, v);
  else if (key == "teacher_top_k") teacher.top_k = to_u64(key, v);
  else if (key == "teacher_bag_size") teacher.bag_size = to_u64(key, v);
  else if (key == "teacher_bag_size_high") teacher_bag_size_high = to_u64(key, v);
  else if (key == "teacher_epochs") teacher.epochs = to_u64(key, v);
  else if (key == "teacher_lr") teacher.lr = to_double(key, v);
  else if (key == "episodes") episodes = to_u64(key, v);
  else if (key == "steps") steps = to_u64(key, v);
  else if (key == "gamma") agent.gamma = to_double(key, v);
  else if (key == "agent_lr") agent.lr = to_double(key, v);
  else if (key == "credit") {
    if (v == "immediate") agent.credit = CreditMode::Immediate;
    else if (v == "return_to_go") agent.credit = CreditMode::ReturnToGo;
    else throw FormatError("config key 'credit': expected immediate or return_to_go");
  } else if (key == "baseline") agent.baseline = to_bool(key, v);
  else if (key == "baseline_decay") agent.baseline_decay = to_double(key, v);
  else if (key == "decision_lr") decision_lr = to_double(key, v);
  else if (key == "temperature") distill.temperature = to_double(key, v);
  else if (key == "epsilon") distill.epsilon = to_double(key, v);
  else if (key == "use_lstm") policy.use_lstm = to_bool(key, v);
  else if (key == "use_fc1") policy.use_fc1 = to_bool(key, v);
  else if (key == "zoom") zoom = to_bool(key, v);
  else if (key == "zoom_child") {
    if (v == "max") zoom_child = ZoomChild::Max;
    else if (v == "mean") zoom_child = ZoomChild::Mean;
    else if (v == "first") zoom_child = ZoomChild::First;
    else throw FormatError("config key 'zoom_child': expected max, mean or first");
  } else if (key == "aggregation") {
    try {
      aggregation = parse_aggregation_rule(v);
    } catch (const ParameterError& e) {
      throw FormatError(e.what());
    }
  } else if (key == "vote_threshold") vote_threshold = to_double(key, v);
  else if (key == "baseline_level") {
    if (v == "1") baseline_level = Level::Low;
    else if (v == "2") baseline_level = Level::High;
    else throw FormatError("config key 'baseline_level': expected 1 or 2");
  } else {
    throw FormatError("unknown config key '" + key + "'");
  }
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : canonical(*this)) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  return parse_config(in);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : cfg.to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, hash);
  return buf;
}

std::vector<std::string> config_diff(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto ca = canonical(a), cb = canonical(b);
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (ca[i].second != cb[i].second) keys.push_back(ca[i].first);
  }
  return keys;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full",     "o-De-KLdiv",   "o-De-CE",      "o-Se-LSTM",
                                              "o-Se-FC1", "o-Se-10x",     "o-Se-FC1&10x", "o-Se-LSTM&10x"};
  return names;
}

ExperimentConfig apply_variant(ExperimentConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "o-De-KLdiv") {
    cfg.distill.epsilon = 0.0;
  } else if (variant == "o-De-CE") {
    cfg.distill.epsilon = 1.0;
  } else if (variant == "o-Se-LSTM") {
    cfg.policy.use_lstm = false;
  } else if (variant == "o-Se-FC1") {
    cfg.policy.use_fc1 = false;
  } else if (variant == "o-Se-10x") {
    cfg.zoom = false;
  } else if (variant == "o-Se-FC1&10x") {
    cfg.policy.use_fc1 = false;
    cfg.zoom = false;
  } else if (variant == "o-Se-LSTM&10x") {
    cfg.policy.use_lstm = false;
    cfg.zoom = false;
  } else {
    throw ParameterError("unknown variant '" + variant + "'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Data and teachers

DatasetSplit split_dataset(std::size_t count, double train, double val, std::uint64_t seed) {
  if (!(train >= 0.0 && val >= 0.0 && train + val <= 1.0 + 1e-12)) throw ParameterError("invalid split fractions");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(count)));
  const auto n_val = std::min(count - n_train, static_cast<std::size_t>(std::llround(val * static_cast<double>(count))));
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

PreparedData prepare_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData data;
  data.config = cfg;
  GeneratorConfig gen = cfg.generator;
  gen.seed = derive_seed(cfg.seed, kGenerator);
  data.slides = generate_dataset(gen, cfg.slides);
  data.split = split_dataset(cfg.slides, cfg.split_train, cfg.split_val, derive_seed(cfg.seed, kSplit));
  if (data.split.train.empty() || data.split.test.empty()) throw ParameterError("train and test splits must be non-empty");
  return data;
}

TeacherTrainResult train_split_teacher(const PreparedData& data, Level level) {
  const ExperimentConfig& cfg = data.config;
  std::vector<SlidePyramid> train;
  for (std::size_t i : data.split.train) train.push_back(data.slides[i]);
  const bool low = level == Level::Low;
  const auto bags = build_bags(train, level, low ? cfg.teacher.bag_size : cfg.teacher_bag_size_high,
                               derive_seed(cfg.seed, low ? kLowBags : kHighBags));
  Rng rng(derive_seed(cfg.seed, low ? kLowTeacher : kHighTeacher));
  return train_teacher(bags, cfg.teacher, rng);
}

PreparedData prepare(const ExperimentConfig& cfg) {
  PreparedData data = prepare_dataset(cfg);

  auto low = train_split_teacher(data, Level::Low);
  auto high = train_split_teacher(data, Level::High);
  data.low = std::move(low.model);
  data.low_loss = std::move(low.loss_history);
  data.high = std::move(high.model);
  data.high_loss = std::move(high.loss_history);
  return data;
}

// ---------------------------------------------------------------------------
// Agents

TrainResult train_agents(std::span<ScoredSlide> views, const ExperimentConfig& cfg) {
  if (views.empty()) throw ParameterError("no training slides");
  const std::size_t f = views.front().feature_dim();
  Rng init(derive_seed(cfg.seed, kAgentInit));
  TrainResult result{{PolicyParams(f, cfg.policy, init), DecisionParams(f, init)}, {}};
  auto& [policy, decision] = result.models;

  ReinforceTrainer trainer(cfg.agent);
  const RolloutConfig rollout_cfg{cfg.steps, cfg.zoom, cfg.zoom_child, StartMode::Random};
  Rng rng(derive_seed(cfg.seed, kAgentTrain));
  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.episodes; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    std::size_t tumor_slides = 0, steps = 0, zooms = 0;
    for (std::size_t idx : order) {
      RecordedEpisode episode = rollout_recorded(views[idx], policy, rollout_cfg, rng);
      trainer.update(policy, episode);
      const Trajectory& traj = episode.trajectory;
      stats.mean_decision_loss += train_decision(decision, std::span(&traj, 1), cfg.distill, cfg.decision_lr);
      const auto rewards = traj.rewards();
      stats.mean_return += discounted_return(rewards, cfg.agent.gamma);
      if (traj.label == SlideLabel::Tumor) {
        stats.tumor_visit_rate += traj.tumor_visit_rate();
        ++tumor_slides;
      }
      zooms += traj.zooms();
      steps += traj.steps.size();
    }
    const double n = static_cast<double>(order.size());
    stats.mean_return /= n;
    stats.mean_decision_loss /= n;
    if (tumor_slides) stats.tumor_visit_rate /= static_cast<double>(tumor_slides);
    stats.zoom_rate = steps ? static_cast<double>(zooms) / static_cast<double>(steps) : 0.0;
    result.history.push_back(stats);
  }
  return result;
}

TrainResult train_agents(const PreparedData& data, const ExperimentConfig& cfg) {
  cfg.validate();
  for (const auto& key : config_diff(data.config, cfg)) {
    if (std::find(data_keys().begin(), data_keys().end(), key) != data_keys().end()) {
      throw ContractError("config key '" + key + "' differs from the prepared data");
    }
  }
  TeacherScorer low(data.low), high(data.high);
  std::vector<ScoredSlide> views;
  views.reserve(data.split.train.size());
  for (std::size_t i : data.split.train) {
    views.emplace_back(data.slides[i], low, cfg.zoom ? &high : nullptr);
    views.back().precompute();
  }
  return train_agents(std::span<ScoredSlide>(views), cfg);
}

// ---------------------------------------------------------------------------
// Evaluation

BaselineResult exhaustive_baseline(std::span<const SlidePyramid> slides, const CellScorer& scorer) {
  if (slides.empty()) throw ParameterError("no slides to evaluate");
  BaselineResult r;
  r.level = scorer.level();
  std::vector<int> truth;
  for (const auto& slide : slides) {
    const auto evals = scorer.evaluate_all(slide);
    r.passes += evals.size();
    const bool tumor = std::any_of(evals.begin(), evals.end(), [](const CellEvaluation& e) { return e.prediction == 1; });
    r.predictions.push_back(tumor ? 1 : 0);
    truth.push_back(static_cast<int>(slide.label));
  }
  r.metrics = compute_metrics(tally(truth, r.predictions));
  return r;
}

RunResult evaluate(const PreparedData& data, const ExperimentConfig& cfg, const AgentModels& models) {
  RunResult run;
  run.config = cfg;
  TeacherScorer low(data.low), high(data.high);
  const RolloutConfig rollout_cfg{cfg.steps, cfg.zoom, cfg.zoom_child, StartMode::Random};
  const std::uint64_t inference_seed = derive_seed(cfg.seed, kInference);

  std::vector<SlidePyramid> test;
  for (std::size_t i : data.split.test) test.push_back(data.slides[i]);

  std::vector<int> truth, predicted;
  std::vector<double> passes;
  double distinct = 0.0, zooms = 0.0;
  const auto guided_start = Clock::now();
  for (const auto& slide : test) {
    ScoredSlide view(slide, low, cfg.zoom ? &high : nullptr);
    Rng rng(derive_seed(inference_seed, static_cast<std::uint64_t>(slide.id)));
    Trajectory traj = rollout(view, models.policy, rollout_cfg, rng);
    SlideVerdict verdict = classify_trajectory(models.decision, traj, cfg.aggregation, cfg.vote_threshold, !cfg.zoom);
    truth.push_back(static_cast<int>(slide.label));
    predicted.push_back(verdict.label);
    passes.push_back(static_cast<double>(traj.teacher_passes));
    distinct += static_cast<double>(traj.distinct_cells);
    zooms += static_cast<double>(traj.zooms());
    run.verdicts.push_back(std::move(verdict));
    run.trajectories.push_back(std::move(traj));
  }
  const double n = static_cast<double>(test.size());
  run.timing.guided_seconds_per_slide = seconds_since(guided_start) / n;
  run.test = compute_metrics(tally(truth, predicted));

  const auto baseline_start = Clock::now();
  run.baseline = exhaustive_baseline(test, cfg.baseline_level == Level::Low ? static_cast<const CellScorer&>(low)
                                                                             : static_cast<const CellScorer&>(high));
  run.timing.exhaustive_seconds_per_slide = seconds_since(baseline_start) / n;

  EfficiencyReport& e = run.efficiency;
  e.slides = test.size();
  const auto ps = mean_std(passes);
  e.guided_passes = ps.mean;
  e.guided_passes_std = ps.std;
  const std::size_t cells = cfg.generator.width * cfg.generator.height;
  e.exhaustive_low = cells;
  e.exhaustive_high = 4 * cells;
  e.exhaustive = run.baseline.passes / test.size();
  e.fraction = e.guided_passes / static_cast<double>(e.exhaustive);
  e.fraction_low = e.guided_passes / static_cast<double>(e.exhaustive_low);
  e.fraction_high = e.guided_passes / static_cast<double>(e.exhaustive_high);
  e.distinct_cells = distinct / n;
  e.zooms = zooms / n;
  return run;
}

RunResult run_experiment(const PreparedData& data, const ExperimentConfig& cfg, const std::string& variant) {
  const auto start = Clock::now();
  TrainResult trained = train_agents(data, cfg);
  const double train_seconds = seconds_since(start);
  RunResult run = evaluate(data, cfg, trained.models);
  run.variant = variant;
  run.history = std::move(trained.history);
  run.timing.train_seconds = train_seconds;
  return run;
}

RunResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(prepare(cfg), cfg); }

MetricsReport run_ablation(const ExperimentConfig& cfg, const std::string& variant) {
  return run_ablation(prepare(cfg), variant).test;
}

RunResult run_ablation(const PreparedData& data, const std::string& variant) {
  return run_experiment(data, apply_variant(data.config, variant), variant);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string undefined_flags(const MetricsReport& m) {
  std::string s;
  auto add = [&s](bool flag, const char* name) {
    if (flag) s += (s.empty() ? "" : ";") + std::string(name);
  };
  add(m.recall_undefined, "recall");
  add(m.precision_undefined, "precision");
  add(m.specificity_undefined, "specificity");
  add(m.f1_undefined, "f1");
  return s;
}

void metrics_row(std::ostream& out, const std::string& variant, const std::string& seed, const std::string& kind,
                 const MetricsReport& m) {
  const auto& c = m.confusion;
  out << variant << ',' << seed << ',' << kind << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn << ','
      << fmt(m.recall) << ',' << fmt(m.precision) << ',' << fmt(m.specificity) << ',' << fmt(m.f1) << ','
      << fmt(m.accuracy) << ',' << undefined_flags(m) << '\n';
}

void summary_rows(std::ostream& out, const std::string& variant, const std::string& kind,
                  std::span<const MetricsReport> reports) {
  const MetricsSummary s = summarize(reports);
  out << variant << ",mean," << kind << ",,,,," << fmt(s.recall.mean) << ',' << fmt(s.precision.mean) << ','
      << fmt(s.specificity.mean) << ',' << fmt(s.f1.mean) << ',' << fmt(s.accuracy.mean) << ",\n";
  out << variant << ",std," << kind << ",,,,," << fmt(s.recall.std) << ',' << fmt(s.precision.std) << ','
      << fmt(s.specificity.std) << ',' << fmt(s.f1.std) << ',' << fmt(s.accuracy.std) << ",\n";
}

std::vector<std::string> variants_in_order(std::span<const RunResult> runs) {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    if (std::find(out.begin(), out.end(), r.variant) == out.end()) out.push_back(r.variant);
  }
  return out;
}

std::string baseline_kind(const RunResult& r) {
  return "exhaustive_l" + std::to_string(static_cast<int>(r.baseline.level));
}

std::string safe_name(std::string s) {
  std::string out;
  for (char ch : s) {
    if (ch == '&') out += "+";
    else out += ch;
  }
  return out;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "variant,seed,kind,tp,fp,tn,fn,recall,precision,specificity,f1,accuracy,undefined\n";
  for (const auto& variant : variants_in_order(runs)) {
    std::vector<MetricsReport> guided, baseline;
    std::string kind;
    for (const auto& r : runs) {
      if (r.variant != variant) continue;
      metrics_row(out, variant, std::to_string(r.config.seed), "guided", r.test);
      guided.push_back(r.test);
    }
    for (const auto& r : runs) {
      if (r.variant != variant) continue;
      kind = baseline_kind(r);
      metrics_row(out, variant, std::to_string(r.config.seed), kind, r.baseline.metrics);
      baseline.push_back(r.baseline.metrics);
    }
    summary_rows(out, variant, "guided", guided);
    summary_rows(out, variant, kind, baseline);
  }
}

void write_efficiency_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "variant,seed,slides,guided_passes,guided_passes_std,exhaustive_passes,exhaustive_low,exhaustive_high,"
         "fraction,fraction_low,fraction_high,distinct_cells,zooms\n";
  for (const auto& r : runs) {
    const auto& e = r.efficiency;
    out << r.variant << ',' << r.config.seed << ',' << e.slides << ',' << fmt(e.guided_passes) << ','
        << fmt(e.guided_passes_std) << ',' << e.exhaustive << ',' << e.exhaustive_low << ',' << e.exhaustive_high
        << ',' << fmt(e.fraction) << ',' << fmt(e.fraction_low) << ',' << fmt(e.fraction_high) << ','
        << fmt(e.distinct_cells) << ',' << fmt(e.zooms) << '\n';
  }
}

void write_training_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "variant,seed,epoch,mean_return,mean_decision_loss,tumor_visit_rate,zoom_rate\n";
  for (const auto& r : runs) {
    for (const auto& h : r.history) {
      out << r.variant << ',' << r.config.seed << ',' << h.epoch << ',' << fmt(h.mean_return) << ','
          << fmt(h.mean_decision_loss) << ',' << fmt(h.tumor_visit_rate) << ',' << fmt(h.zoom_rate) << '\n';
    }
  }
}

void write_timing_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "variant,seed,train_seconds,guided_seconds_per_slide,exhaustive_seconds_per_slide\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.config.seed << ',' << fmt(r.timing.train_seconds) << ','
        << fmt(r.timing.guided_seconds_per_slide) << ',' << fmt(r.timing.exhaustive_seconds_per_slide) << '\n';
  }
}

void emit_reports(const std::string& dir, std::span<const RunResult> runs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw FormatError("cannot write '" + p.string() + "'");
    return out;
  };
  {
    auto out = open(fs::path(dir) / "metrics.csv");
    write_metrics_csv(out, runs);
  }
  {
    auto out = open(fs::path(dir) / "efficiency.csv");
    write_efficiency_csv(out, runs);
  }
  {
    auto out = open(fs::path(dir) / "training.csv");
    write_training_csv(out, runs);
  }
  {
    auto out = open(fs::path(dir) / "timing.csv");
    write_timing_csv(out, runs);
  }
  for (const auto& r : runs) {
    const fs::path sub = fs::path(dir) / "runs" / safe_name(r.variant) / ("seed-" + std::to_string(r.config.seed));
    fs::create_directories(sub);
    auto traj = open(sub / "trajectories.jsonl");
    for (const auto& t : r.trajectories) write_trajectory_log(traj, t, 0);
    auto verdicts = open(sub / "verdicts.jsonl");
    for (const auto& v : r.verdicts) write_verdict(verdicts, v);
  }
}

void write_manifest(const std::string& dir, const ExperimentConfig& cfg, std::span<const RunResult> runs) {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / "manifest.txt";
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "pathsearch " << kVersion << '\n';
  out << "config_hash " << hash_hex(config_hash(cfg)) << '\n';
  out << "variants";
  for (const auto& v : variants_in_order(runs)) out << ' ' << v;
  out << "\nseeds";
  for (const auto& r : runs) {
    if (r.variant == runs.front().variant) out << ' ' << r.config.seed;
  }
  out << "\n\n" << cfg.to_text();
}

}  // namespace pathsearch
