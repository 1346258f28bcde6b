#pragma once

// Search agent: a recurrent policy that walks the coarse grid, zooms into
// cells the level-1 teacher flags, and is trained with REINFORCE on the
// teacher-derived rewards.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pathsearch/checkpoint.hpp"
#include "pathsearch/nn.hpp"
#include "pathsearch/slide.hpp"
#include "pathsearch/teacher.hpp"

namespace pathsearch {

struct PolicyConfig {
  bool use_lstm = true;
  bool use_fc1 = true;
};

/// Policy parameters recorded on a tape for one episode.
struct BoundPolicy {
  BoundLstm lstm;
  BoundDense fc1;
  BoundDense fc2;
  PolicyConfig config;
  std::size_t feature_dim = 0;

  struct Step {
    Var log_probs;  // [1 x 4]
    LstmState state;
  };

  /// fusion = LSTM(v).h + FC1(v); log pi = log_softmax(FC2(fusion)).
  Step operator()(Var v, LstmState prev) const;
  LstmState initial_state(Tape& tape) const;
};

class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::size_t feature_dim, PolicyConfig config, Rng& rng);
  static PolicyParams zeros(std::size_t feature_dim, PolicyConfig config = {});

  std::size_t feature_dim() const { return feature_dim_; }
  const PolicyConfig& config() const { return config_; }

  BoundPolicy bind(Tape& tape);
  BoundPolicy bind(Tape& tape) const;

  /// Parameters of the active branches only.
  std::vector<Tensor*> parameters();

  LstmCell& lstm() { return lstm_; }
  Dense& fc1() { return fc1_; }
  Dense& fc2() { return fc2_; }

  Checkpoint to_checkpoint() const;
  static PolicyParams from_checkpoint(const Checkpoint& ckpt);

 private:
  std::size_t feature_dim_ = 0;
  PolicyConfig config_;
  LstmCell lstm_;
  Dense fc1_;
  Dense fc2_;
};

struct RecurrentState {
  std::vector<double> h;
  std::vector<double> c;

  static RecurrentState zeros(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)}; }
};

struct PolicyOutput {
  std::array<double, kNumActions> dist{};
  RecurrentState state;
};

PolicyOutput policy_forward(const PolicyParams& params, std::span<const double> v, const RecurrentState& state);

/// Categorical draw from `dist`.
int sample_action(std::span<const double> dist, Rng& rng);

/// -1 when y1 = 0; +1 when y1 = 1 and the zoom disagrees or was not taken;
/// +3 when both levels flag tumor. A level-2 verdict without a level-1 tumor
/// call is a contract error.
int compute_reward(int y1, std::optional<int> y2);

double discounted_return(std::span<const int> rewards, double gamma);
double discounted_return(std::span<const double> rewards, double gamma);

// ---------------------------------------------------------------------------
// Environment view with per-slide memoization of teacher passes

enum class ZoomChild { Max, Mean, First };
enum class StartMode { Random, Origin };

struct ZoomResult {
  const CellEvaluation* evaluation = nullptr;
  int child = 0;  // -1 for the pooled mean patch
};

class ScoredSlide {
 public:
  ScoredSlide(const SlidePyramid& slide, const CellScorer& low, const CellScorer* high);

  /// Scores every cell at both levels up front (training uses this).
  void precompute();

  const SlidePyramid& slide() const { return *slide_; }
  std::size_t feature_dim() const { return low_->feature_dim(); }
  bool has_high() const { return high_ != nullptr; }

  const CellEvaluation& low(AgentPosition pos);
  const CellEvaluation& high(AgentPosition pos, int sub);
  ZoomResult zoom(AgentPosition pos, ZoomChild rule);

  /// Teacher forward passes spent on this slide so far; each distinct patch
  /// is scored once.
  std::size_t forward_passes() const { return passes_; }

 private:
  const SlidePyramid* slide_;
  const CellScorer* low_;
  const CellScorer* high_;
  std::vector<std::optional<CellEvaluation>> low_cache_;
  std::vector<std::optional<CellEvaluation>> high_cache_;
  std::vector<std::optional<CellEvaluation>> pooled_cache_;
  std::size_t passes_ = 0;
};

struct RolloutConfig {
  std::size_t steps = 0;  // 0 means the full budget width * height
  bool zoom = true;
  ZoomChild zoom_child = ZoomChild::Max;
  StartMode start = StartMode::Random;
};

struct TrajectoryStep {
  AgentPosition position;  // cell reached by the action
  int action = 0;
  double log_prob = 0.0;
  int reward = 0;
  bool zoomed = false;
  int y1 = 0;
  std::optional<int> y2;
  int zoom_child = 0;
  std::vector<double> policy_input;    // features of the state the action was chosen in
  std::vector<double> decision_input;  // features of the reached state (level 2 when zoomed)
  std::array<double, 2> teacher_logits{0.0, 0.0};  // from the teacher of the matching level
  bool tumor_truth = false;            // hidden mask; reporting only
};

struct Trajectory {
  int slide_id = 0;
  SlideLabel label = SlideLabel::Benign;
  AgentPosition start;
  std::vector<TrajectoryStep> steps;
  std::size_t distinct_cells = 0;
  std::size_t teacher_passes = 0;

  std::vector<int> rewards() const;
  std::size_t zooms() const;
  /// Fraction of steps that landed on a hidden-mask tumor cell.
  double tumor_visit_rate() const;
};

Trajectory rollout(ScoredSlide& view, const PolicyParams& params, const RolloutConfig& cfg, Rng& rng);

/// A rollout recorded with trainable parameters, so the policy gradient can
/// be taken from the same tape instead of replaying the episode.
struct RecordedEpisode {
  Trajectory trajectory;
  std::unique_ptr<Tape> tape;
  std::vector<Var> log_probs;  // per step, [1 x 4]
};

/// Same draws and trajectory as rollout() for the same rng state.
RecordedEpisode rollout_recorded(ScoredSlide& view, PolicyParams& params, const RolloutConfig& cfg, Rng& rng);

enum class CreditMode { Immediate, ReturnToGo };

/// Per-step weights: gamma^(t-1) r_t (Immediate) or sum_{k>=t} gamma^(k-t) r_k.
std::vector<double> credit_weights(std::span<const int> rewards, double gamma, CreditMode mode);

/// Replays the trajectory through the policy and accumulates
/// d/dphi sum_t w_t log pi(a_t | s_t) into the parameter grads (zeroed
/// first). Returns the weighted log-likelihood.
double accumulate_policy_gradient(PolicyParams& params, const Trajectory& traj, std::span<const double> weights);
/// Same gradient taken on the recorded tape; consumes the tape.
double accumulate_policy_gradient(PolicyParams& params, RecordedEpisode& episode, std::span<const double> weights);

/// One ascent step on the episode objective. The trajectory must come from
/// the current parameters; a mismatch cannot be detected.
double reinforce_update(PolicyParams& params, const Trajectory& traj, double gamma, double lr,
                        CreditMode credit = CreditMode::Immediate);

struct ReinforceConfig {
  double gamma = 0.9;
  double lr = 1e-3;
  CreditMode credit = CreditMode::Immediate;
  bool baseline = false;
  double baseline_decay = 0.95;
};

/// reinforce_update with an optional per-step moving-average baseline.
class ReinforceTrainer {
 public:
  explicit ReinforceTrainer(ReinforceConfig cfg) : cfg_(cfg) {}
  double update(PolicyParams& params, const Trajectory& traj);
  double update(PolicyParams& params, RecordedEpisode& episode);
  const ReinforceConfig& config() const { return cfg_; }

 private:
  std::vector<double> weights(const Trajectory& traj);

  ReinforceConfig cfg_;
  std::vector<double> baseline_;
};

/// One JSON object per step: slide, episode, step, row, col, action, reward, zoom.
void write_trajectory_log(std::ostream& out, const Trajectory& traj, std::size_t episode);

}  // namespace pathsearch
