#pragma once

// Decision agent: one dense layer over state features, trained against the
// teacher's temperature-softened logits plus the slide label.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pathsearch/checkpoint.hpp"
#include "pathsearch/nn.hpp"
#include "pathsearch/search_agent.hpp"

namespace pathsearch {

struct DistillConfig {
  double temperature = 5.0;
  double epsilon = 0.8;  // weight of the distillation term

  void validate() const;
};

class DecisionParams {
 public:
  DecisionParams() = default;
  DecisionParams(std::size_t feature_dim, Rng& rng) : fc_(feature_dim, 2, rng) {}
  static DecisionParams zeros(std::size_t feature_dim);

  std::size_t feature_dim() const { return fc_.in_dim(); }
  Var logits(Tape& tape, Var v) { return fc_.forward(tape, v); }
  Var logits(Tape& tape, Var v) const { return fc_.forward(tape, v); }
  std::vector<Tensor*> parameters() { return {&fc_.weight(), &fc_.bias()}; }
  Dense& fc() { return fc_; }

  Checkpoint to_checkpoint() const;
  static DecisionParams from_checkpoint(const Checkpoint& ckpt);

 private:
  Dense fc_;
};

std::array<double, 2> soft_label(std::span<const double> teacher_logits, double temperature);

struct DecisionOutput {
  std::array<double, 2> soft{};  // softmax(z / H)
  std::array<double, 2> hard{};  // softmax(z)
  int label = 0;                 // argmax, ties to 0
};

DecisionOutput decision_forward(const DecisionParams& params, std::span<const double> v, double temperature);

/// eps * H^2 * KL(soft_teacher || soft_student) + (1 - eps) * CE(hard_label, student_probs).
double distillation_loss(std::span<const double> soft_teacher, std::span<const double> soft_student,
                         std::span<const double> hard_label_onehot, std::span<const double> student_probs,
                         double epsilon, double temperature);

/// Batched form on a tape: student logits [m x 2], teacher logits and one-hot
/// labels as constants of the same shape. Mean over rows.
Var distillation_loss(Var student_logits, Var teacher_logits, Var hard_onehot, const DistillConfig& cfg);

/// One gradient step per trajectory over all of its visited states. Zoomed
/// steps distill from the level-2 teacher logits recorded in the step,
/// others from level 1. The hard label is the slide label. Returns the mean
/// loss over trajectories.
double train_decision(DecisionParams& params, std::span<const Trajectory> trajectories, const DistillConfig& cfg,
                      double lr);

enum class AggregationRule { AnyZoomedTumor, Fraction };

struct VisitVerdict {
  int prediction = 0;
  bool zoomed = false;
};

struct SlideVerdict {
  int slide_id = 0;
  SlideLabel true_label = SlideLabel::Benign;
  std::vector<VisitVerdict> visits;
  int label = 0;
  double tumor_vote_fraction = 0.0;
  std::size_t zooms = 0;
  std::size_t teacher_passes = 0;
  AggregationRule rule = AggregationRule::AnyZoomedTumor;
};

/// AnyZoomedTumor: tumor iff some zoomed visit is classified tumor.
/// Fraction: tumor iff the tumor-vote fraction over all visits >= threshold.
/// With `decisive_unzoomed` the any-zoomed rule treats every visit as
/// decisive, which is how runs without zoom are scored.
SlideVerdict aggregate_slide(std::span<const VisitVerdict> visits, AggregationRule rule, double threshold,
                             bool decisive_unzoomed = false);

/// Classifies every visited state of a trajectory and aggregates.
SlideVerdict classify_trajectory(const DecisionParams& params, const Trajectory& traj, AggregationRule rule,
                                 double threshold, bool decisive_unzoomed = false);

std::string to_string(AggregationRule rule);
AggregationRule parse_aggregation_rule(const std::string& name);

/// JSON line: slide_id, true_label, predicted_label, vote_fraction, visits, zooms, rule.
void write_verdict(std::ostream& out, const SlideVerdict& verdict);

}  // namespace pathsearch
