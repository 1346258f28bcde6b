#include "pathsearch/search_agent.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "json.hpp"
#include "pathsearch/errors.hpp"

namespace pathsearch {

// ---------------------------------------------------------------------------
// Policy

BoundPolicy::Step BoundPolicy::operator()(Var v, LstmState prev) const {
  if (v.cols() != feature_dim || v.rows() != 1) {
    throw ContractError("policy input must be a 1x" + std::to_string(feature_dim) + " feature row");
  }
  LstmState next = prev;
  Var fusion;
  if (config.use_lstm) {
    next = lstm(v, prev);
    fusion = next.h;
  }
  if (config.use_fc1) {
    Var projected = fc1(v);
    fusion = fusion.valid() ? fusion + projected : projected;
  }
  return {log_softmax(fc2(fusion)), next};
}

LstmState BoundPolicy::initial_state(Tape& tape) const {
  std::vector<double> zeros(feature_dim, 0.0);
  return {tape.constant(zeros, {1, feature_dim}), tape.constant(zeros, {1, feature_dim})};
}

PolicyParams::PolicyParams(std::size_t feature_dim, PolicyConfig config, Rng& rng)
    : feature_dim_(feature_dim),
      config_(config),
      lstm_(feature_dim, feature_dim, rng),
      fc1_(feature_dim, feature_dim, rng),
      fc2_(feature_dim, kNumActions, rng) {
  if (!config.use_lstm && !config.use_fc1) throw ParameterError("policy needs the LSTM branch, FC1 branch, or both");
}

PolicyParams PolicyParams::zeros(std::size_t feature_dim, PolicyConfig config) {
  if (!config.use_lstm && !config.use_fc1) throw ParameterError("policy needs the LSTM branch, FC1 branch, or both");
  PolicyParams p;
  p.feature_dim_ = feature_dim;
  p.config_ = config;
  p.lstm_ = LstmCell::zeros(feature_dim, feature_dim);
  p.fc1_ = Dense::zeros(feature_dim, feature_dim);
  p.fc2_ = Dense::zeros(feature_dim, kNumActions);
  return p;
}

BoundPolicy PolicyParams::bind(Tape& tape) {
  BoundPolicy b;
  b.config = config_;
  b.feature_dim = feature_dim_;
  if (config_.use_lstm) b.lstm = lstm_.bind(tape);
  if (config_.use_fc1) b.fc1 = fc1_.bind(tape);
  b.fc2 = fc2_.bind(tape);
  return b;
}

BoundPolicy PolicyParams::bind(Tape& tape) const {
  BoundPolicy b;
  b.config = config_;
  b.feature_dim = feature_dim_;
  if (config_.use_lstm) b.lstm = lstm_.bind(tape);
  if (config_.use_fc1) b.fc1 = fc1_.bind(tape);
  b.fc2 = fc2_.bind(tape);
  return b;
}

std::vector<Tensor*> PolicyParams::parameters() {
  std::vector<Tensor*> params;
  if (config_.use_lstm) {
    params.push_back(&lstm_.input_weight());
    params.push_back(&lstm_.hidden_weight());
    params.push_back(&lstm_.bias());
  }
  if (config_.use_fc1) {
    params.push_back(&fc1_.weight());
    params.push_back(&fc1_.bias());
  }
  params.push_back(&fc2_.weight());
  params.push_back(&fc2_.bias());
  return params;
}

Checkpoint PolicyParams::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "policy";
  ckpt.attributes["feature_dim"] = std::to_string(feature_dim_);
  ckpt.attributes["use_lstm"] = config_.use_lstm ? "1" : "0";
  ckpt.attributes["use_fc1"] = config_.use_fc1 ? "1" : "0";
  ckpt.tensors = {
      {"lstm.input_weight", lstm_.input_weight()},
      {"lstm.hidden_weight", lstm_.hidden_weight()},
      {"lstm.bias", lstm_.bias()},
      {"fc1.weight", fc1_.weight()},
      {"fc1.bias", fc1_.bias()},
      {"fc2.weight", fc2_.weight()},
      {"fc2.bias", fc2_.bias()},
  };
  return ckpt;
}

PolicyParams PolicyParams::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "policy") throw FormatError("checkpoint is not a policy");
  PolicyConfig cfg{ckpt.attribute("use_lstm") == "1", ckpt.attribute("use_fc1") == "1"};
  PolicyParams p = zeros(std::stoul(ckpt.attribute("feature_dim")), cfg);
  auto load = [&ckpt](Tensor& dst, const char* name) {
    const Tensor& src = ckpt.tensor(name);
    if (src.shape() != dst.shape()) throw FormatError(std::string("tensor '") + name + "' has the wrong shape");
    dst = src;
    dst.set_requires_grad(true);
  };
  load(p.lstm_.input_weight(), "lstm.input_weight");
  load(p.lstm_.hidden_weight(), "lstm.hidden_weight");
  load(p.lstm_.bias(), "lstm.bias");
  load(p.fc1_.weight(), "fc1.weight");
  load(p.fc1_.bias(), "fc1.bias");
  load(p.fc2_.weight(), "fc2.weight");
  load(p.fc2_.bias(), "fc2.bias");
  return p;
}

PolicyOutput policy_forward(const PolicyParams& params, std::span<const double> v, const RecurrentState& state) {
  const std::size_t f = params.feature_dim();
  if (v.size() != f || state.h.size() != f || state.c.size() != f) {
    throw ContractError("policy_forward: input and state must have dimension " + std::to_string(f));
  }
  Tape tape;
  BoundPolicy bound = params.bind(tape);
  LstmState prev{tape.constant(state.h, {1, f}), tape.constant(state.c, {1, f})};
  auto step = bound(tape.constant(v, {1, f}), prev);
  PolicyOutput out;
  for (int a = 0; a < kNumActions; ++a) out.dist[a] = std::exp(step.log_probs[a]);
  out.state.h.assign(step.state.h.data().begin(), step.state.h.data().end());
  out.state.c.assign(step.state.c.data().begin(), step.state.c.data().end());
  return out;
}

int sample_action(std::span<const double> dist, Rng& rng) {
  if (dist.empty()) throw ContractError("sample_action: empty distribution");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    if (dist[a] > 0.0) last_positive = static_cast<int>(a);
    cumulative += dist[a];
    if (u < cumulative) return static_cast<int>(a);
  }
  // u landed in the rounding gap above the cumulative sum.
  return last_positive;
}

int compute_reward(int y1, std::optional<int> y2) {
  if (y1 != 0 && y1 != 1) throw ContractError("compute_reward: y1 must be 0 or 1");
  if (y2 && *y2 != 0 && *y2 != 1) throw ContractError("compute_reward: y2 must be 0 or 1");
  if (y1 == 0) {
    if (y2) throw ContractError("compute_reward: level-2 verdict given without a level-1 tumor call");
    return -1;
  }
  return (y2 && *y2 == 1) ? 3 : 1;
}

namespace {

template <class T>
double discounted(std::span<const T> rewards, double gamma) {
  double total = 0.0, weight = 1.0;
  for (const T& r : rewards) {
    total += weight * static_cast<double>(r);
    weight *= gamma;
  }
  return total;
}

}  // namespace

double discounted_return(std::span<const int> rewards, double gamma) { return discounted(rewards, gamma); }
double discounted_return(std::span<const double> rewards, double gamma) { return discounted(rewards, gamma); }

// ---------------------------------------------------------------------------
// ScoredSlide

ScoredSlide::ScoredSlide(const SlidePyramid& slide, const CellScorer& low, const CellScorer* high)
    : slide_(&slide), low_(&low), high_(high) {
  if (low.level() != Level::Low) throw ContractError("low scorer must answer for level 1");
  if (high && high->level() != Level::High) throw ContractError("high scorer must answer for level 2");
  if (high && high->feature_dim() != low.feature_dim()) {
    throw ContractError("level-1 and level-2 scorers must emit the same feature dimension");
  }
  const std::size_t cells = slide.width() * slide.height();
  low_cache_.resize(cells);
  if (high) {
    high_cache_.resize(4 * cells);
    pooled_cache_.resize(cells);
  }
}

void ScoredSlide::precompute() {
  auto lows = low_->evaluate_all(*slide_);
  for (std::size_t i = 0; i < lows.size(); ++i) {
    if (!low_cache_[i]) ++passes_;
    low_cache_[i] = std::move(lows[i]);
  }
  if (high_) {
    auto highs = high_->evaluate_all(*slide_);
    for (std::size_t i = 0; i < highs.size(); ++i) {
      if (!high_cache_[i]) ++passes_;
      high_cache_[i] = std::move(highs[i]);
    }
  }
}

const CellEvaluation& ScoredSlide::low(AgentPosition pos) {
  if (pos.row >= slide_->height() || pos.col >= slide_->width()) throw ContractError("position out of bounds");
  auto& slot = low_cache_[pos.row * slide_->width() + pos.col];
  if (!slot) {
    slot = low_->evaluate(*slide_, pos.row, pos.col);
    ++passes_;
  }
  return *slot;
}

const CellEvaluation& ScoredSlide::high(AgentPosition pos, int sub) {
  if (!high_) throw ContractError("no level-2 scorer attached");
  if (pos.row >= slide_->height() || pos.col >= slide_->width()) throw ContractError("position out of bounds");
  const auto [r, c] = child_cell(pos, sub);
  auto& slot = high_cache_[r * 2 * slide_->width() + c];
  if (!slot) {
    slot = high_->evaluate(*slide_, r, c);
    ++passes_;
  }
  return *slot;
}

ZoomResult ScoredSlide::zoom(AgentPosition pos, ZoomChild rule) {
  switch (rule) {
    case ZoomChild::First:
      return {&high(pos, 0), 0};
    case ZoomChild::Mean: {
      if (!high_) throw ContractError("no level-2 scorer attached");
      auto& slot = pooled_cache_[pos.row * slide_->width() + pos.col];
      if (!slot) {
        slot = high_->evaluate_pooled(*slide_, pos);
        ++passes_;
      }
      return {&*slot, -1};
    }
    case ZoomChild::Max:
    default: {
      ZoomResult best{&high(pos, 0), 0};
      for (int sub = 1; sub < 4; ++sub) {
        const CellEvaluation& e = high(pos, sub);
        if (e.tumor_prob > best.evaluation->tumor_prob) best = {&e, sub};
      }
      return best;
    }
  }
}

// ---------------------------------------------------------------------------
// Rollout

std::vector<int> Trajectory::rewards() const {
  std::vector<int> r;
  r.reserve(steps.size());
  for (const auto& s : steps) r.push_back(s.reward);
  return r;
}

std::size_t Trajectory::zooms() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.zoomed ? 1 : 0;
  return n;
}

double Trajectory::tumor_visit_rate() const {
  if (steps.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& s : steps) n += s.tumor_truth ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(steps.size());
}

namespace {

// Shared episode loop. `policy` is bound on `tape`; when `log_probs` is given
// the per-step log-probability nodes are kept for a later backward pass.
Trajectory run_episode(ScoredSlide& view, std::size_t f, const BoundPolicy& policy, Tape& tape,
                       const RolloutConfig& cfg, Rng& rng, std::vector<Var>* log_probs) {
  const SlidePyramid& slide = view.slide();
  const GridBounds bounds = slide.bounds();
  if (view.feature_dim() != f) throw ContractError("scorer feature dimension does not match the policy");
  if (cfg.zoom && !view.has_high()) throw ContractError("zooming requires a level-2 scorer");
  const std::size_t budget = cfg.steps ? cfg.steps : episode_budget(bounds.width, bounds.height);

  Trajectory traj;
  traj.slide_id = slide.id;
  traj.label = slide.label;
  traj.start = cfg.start == StartMode::Random ? random_position(bounds, rng) : AgentPosition{};
  traj.steps.reserve(budget);
  const std::size_t passes_before = view.forward_passes();

  std::vector<bool> visited(bounds.width * bounds.height, false);
  auto mark = [&](AgentPosition p) {
    auto idx = p.row * bounds.width + p.col;
    if (!visited[idx]) {
      visited[idx] = true;
      ++traj.distinct_cells;
    }
  };

  LstmState state = policy.initial_state(tape);
  AgentPosition pos = traj.start;
  mark(pos);
  std::array<double, kNumActions> dist{};
  for (std::size_t t = 0; t < budget; ++t) {
    TrajectoryStep step;
    const CellEvaluation& current = view.low(pos);
    step.policy_input = current.features;
    auto out = policy(tape.constant(current.features, {1, f}), state);
    state = out.state;
    for (int a = 0; a < kNumActions; ++a) dist[a] = std::exp(out.log_probs[a]);
    step.action = sample_action(dist, rng);
    step.log_prob = out.log_probs[step.action];
    if (log_probs) log_probs->push_back(out.log_probs);

    pos = apply_action(pos, step.action, bounds);
    mark(pos);
    step.position = pos;
    step.tumor_truth = slide.tumor_lo(pos.row, pos.col);

    const CellEvaluation& reached = view.low(pos);
    step.y1 = reached.prediction;
    if (cfg.zoom && step.y1 == 1) {
      ZoomResult z = view.zoom(pos, cfg.zoom_child);
      step.zoomed = true;
      step.zoom_child = z.child;
      step.y2 = z.evaluation->prediction;
      step.decision_input = z.evaluation->features;
      step.teacher_logits = z.evaluation->logits;
    } else {
      step.decision_input = reached.features;
      step.teacher_logits = reached.logits;
    }
    step.reward = compute_reward(step.y1, step.y2);
    traj.steps.push_back(std::move(step));
  }
  traj.teacher_passes = view.forward_passes() - passes_before;
  return traj;
}

}  // namespace

Trajectory rollout(ScoredSlide& view, const PolicyParams& params, const RolloutConfig& cfg, Rng& rng) {
  Tape tape;
  BoundPolicy policy = params.bind(tape);
  return run_episode(view, params.feature_dim(), policy, tape, cfg, rng, nullptr);
}

RecordedEpisode rollout_recorded(ScoredSlide& view, PolicyParams& params, const RolloutConfig& cfg, Rng& rng) {
  RecordedEpisode ep;
  ep.tape = std::make_unique<Tape>();
  BoundPolicy policy = params.bind(*ep.tape);
  ep.trajectory = run_episode(view, params.feature_dim(), policy, *ep.tape, cfg, rng, &ep.log_probs);
  return ep;
}

// ---------------------------------------------------------------------------
// Policy gradient

std::vector<double> credit_weights(std::span<const int> rewards, double gamma, CreditMode mode) {
  std::vector<double> w(rewards.size());
  if (mode == CreditMode::Immediate) {
    double discount = 1.0;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
      w[t] = discount * rewards[t];
      discount *= gamma;
    }
  } else {
    double running = 0.0;
    for (std::size_t t = rewards.size(); t-- > 0;) {
      running = rewards[t] + gamma * running;
      w[t] = running;
    }
  }
  return w;
}

double accumulate_policy_gradient(PolicyParams& params, const Trajectory& traj, std::span<const double> weights) {
  if (weights.size() != traj.steps.size()) throw ContractError("one credit weight per step required");
  auto tensors = params.parameters();
  zero_grads(tensors);
  const std::size_t f = params.feature_dim();
  Tape tape;
  BoundPolicy policy = params.bind(tape);
  LstmState state = policy.initial_state(tape);
  Var objective;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& step = traj.steps[t];
    auto out = policy(tape.constant(step.policy_input, {1, f}), state);
    state = out.state;
    if (weights[t] == 0.0) continue;
    Var term = scale(pick(out.log_probs, static_cast<std::size_t>(step.action)), weights[t]);
    objective = objective.valid() ? objective + term : term;
  }
  if (!objective.valid()) return 0.0;
  tape.backward(objective);
  return objective.value();
}

double accumulate_policy_gradient(PolicyParams& params, RecordedEpisode& episode, std::span<const double> weights) {
  const Trajectory& traj = episode.trajectory;
  if (weights.size() != traj.steps.size() || episode.log_probs.size() != traj.steps.size()) {
    throw ContractError("one credit weight and one recorded step per trajectory step required");
  }
  if (!episode.tape || episode.tape->backward_done()) throw ContractError("episode tape is missing or already used");
  auto tensors = params.parameters();
  zero_grads(tensors);
  Var objective;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    if (weights[t] == 0.0) continue;
    Var term = scale(pick(episode.log_probs[t], static_cast<std::size_t>(traj.steps[t].action)), weights[t]);
    objective = objective.valid() ? objective + term : term;
  }
  if (!objective.valid()) return 0.0;
  episode.tape->backward(objective);
  return objective.value();
}

double reinforce_update(PolicyParams& params, const Trajectory& traj, double gamma, double lr, CreditMode credit) {
  const auto rewards = traj.rewards();
  const auto weights = credit_weights(rewards, gamma, credit);
  const double objective = accumulate_policy_gradient(params, traj, weights);
  apply_gradient(params.parameters(), lr);
  return objective;
}

std::vector<double> ReinforceTrainer::weights(const Trajectory& traj) {
  const auto rewards = traj.rewards();
  auto weights = credit_weights(rewards, cfg_.gamma, cfg_.credit);
  if (cfg_.baseline) {
    if (baseline_.size() < weights.size()) baseline_.resize(weights.size(), 0.0);
    for (std::size_t t = 0; t < weights.size(); ++t) {
      const double raw = weights[t];
      weights[t] -= baseline_[t];
      baseline_[t] = cfg_.baseline_decay * baseline_[t] + (1.0 - cfg_.baseline_decay) * raw;
    }
  }
  return weights;
}

double ReinforceTrainer::update(PolicyParams& params, const Trajectory& traj) {
  const auto w = weights(traj);
  const double objective = accumulate_policy_gradient(params, traj, w);
  apply_gradient(params.parameters(), cfg_.lr);
  return objective;
}

double ReinforceTrainer::update(PolicyParams& params, RecordedEpisode& episode) {
  const auto w = weights(episode.trajectory);
  const double objective = accumulate_policy_gradient(params, episode, w);
  apply_gradient(params.parameters(), cfg_.lr);
  return objective;
}

void write_trajectory_log(std::ostream& out, const Trajectory& traj, std::size_t episode) {
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    nlohmann::ordered_json rec;
    rec["slide"] = traj.slide_id;
    rec["episode"] = episode;
    rec["step"] = t + 1;
    rec["row"] = s.position.row;
    rec["col"] = s.position.col;
    rec["action"] = s.action;
    rec["reward"] = s.reward;
    rec["zoom"] = s.zoomed;
    out << rec.dump() << '\n';
  }
}

}  // namespace pathsearch
