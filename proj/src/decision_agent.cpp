#include "pathsearch/decision_agent.hpp"

#include <cmath>
#include <ostream>

#include "json.hpp"
#include "pathsearch/errors.hpp"

namespace pathsearch {

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw ParameterError("distillation temperature must be > 0");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("distillation epsilon must lie in [0, 1]");
}

DecisionParams DecisionParams::zeros(std::size_t feature_dim) {
  DecisionParams p;
  p.fc_ = Dense::zeros(feature_dim, 2);
  return p;
}

Checkpoint DecisionParams::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "decision";
  ckpt.attributes["feature_dim"] = std::to_string(feature_dim());
  ckpt.tensors = {{"fc.weight", fc_.weight()}, {"fc.bias", fc_.bias()}};
  return ckpt;
}

DecisionParams DecisionParams::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "decision") throw FormatError("checkpoint is not a decision model");
  DecisionParams p = zeros(std::stoul(ckpt.attribute("feature_dim")));
  for (auto [dst, name] : {std::pair{&p.fc_.weight(), "fc.weight"}, std::pair{&p.fc_.bias(), "fc.bias"}}) {
    const Tensor& src = ckpt.tensor(name);
    if (src.shape() != dst->shape()) throw FormatError(std::string("tensor '") + name + "' has the wrong shape");
    *dst = src;
    dst->set_requires_grad(true);
  }
  return p;
}

std::array<double, 2> soft_label(std::span<const double> teacher_logits, double temperature) {
  if (teacher_logits.size() != 2) throw ShapeError("soft_label expects two logits");
  auto p = softmax_temp(teacher_logits, temperature);
  return {p[0], p[1]};
}

DecisionOutput decision_forward(const DecisionParams& params, std::span<const double> v, double temperature) {
  if (v.size() != params.feature_dim()) throw ContractError("decision input has the wrong dimension");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be > 0");
  Tape tape;
  Var z = params.logits(tape, tape.constant(v, {1, v.size()}));
  std::array<double, 2> logits{z[0], z[1]};
  DecisionOutput out;
  auto soft = softmax_temp(logits, temperature);
  auto hard = softmax_temp(logits, 1.0);
  out.soft = {soft[0], soft[1]};
  out.hard = {hard[0], hard[1]};
  out.label = argmax2(logits);
  return out;
}

double distillation_loss(std::span<const double> soft_teacher, std::span<const double> soft_student,
                         std::span<const double> hard_label_onehot, std::span<const double> student_probs,
                         double epsilon, double temperature) {
  DistillConfig{temperature, epsilon}.validate();
  const double kl = kl_divergence(soft_teacher, soft_student);
  const double ce = cross_entropy(student_probs, hard_label_onehot);
  return epsilon * temperature * temperature * kl + (1.0 - epsilon) * ce;
}

Var distillation_loss(Var student_logits, Var teacher_logits, Var hard_onehot, const DistillConfig& cfg) {
  cfg.validate();
  const double h = cfg.temperature;
  Var loss;
  if (cfg.epsilon > 0.0) {
    Var kl = kl_divergence(softmax_temp(teacher_logits, h), softmax_temp(student_logits, h));
    loss = scale(kl, cfg.epsilon * h * h);
  }
  if (cfg.epsilon < 1.0) {
    Var ce = scale(cross_entropy(softmax(student_logits), hard_onehot), 1.0 - cfg.epsilon);
    loss = loss.valid() ? loss + ce : ce;
  }
  return loss;
}

double train_decision(DecisionParams& params, std::span<const Trajectory> trajectories, const DistillConfig& cfg,
                      double lr) {
  if (trajectories.empty()) throw ParameterError("train_decision needs at least one trajectory");
  cfg.validate();
  const std::size_t f = params.feature_dim();
  auto tensors = params.parameters();
  std::vector<double> inputs, teacher, hard;
  double total = 0.0;
  std::size_t updates = 0;
  Tape tape;
  for (const auto& traj : trajectories) {
    if (traj.steps.empty()) continue;
    inputs.clear();
    teacher.clear();
    hard.clear();
    const bool tumor = traj.label == SlideLabel::Tumor;
    for (const auto& step : traj.steps) {
      if (step.decision_input.size() != f) throw ContractError("decision input has the wrong dimension");
      inputs.insert(inputs.end(), step.decision_input.begin(), step.decision_input.end());
      teacher.insert(teacher.end(), step.teacher_logits.begin(), step.teacher_logits.end());
      hard.push_back(tumor ? 0.0 : 1.0);
      hard.push_back(tumor ? 1.0 : 0.0);
    }
    const std::size_t rows = traj.steps.size();
    tape.clear();
    zero_grads(tensors);
    Var z = params.logits(tape, tape.constant(inputs, {rows, f}));
    Var loss = distillation_loss(z, tape.constant(teacher, {rows, 2}), tape.constant(hard, {rows, 2}), cfg);
    tape.backward(loss);
    apply_gradient(tensors, -lr);
    total += loss.value();
    ++updates;
  }
  zero_grads(tensors);
  if (updates == 0) throw ParameterError("train_decision: every trajectory is empty");
  return total / static_cast<double>(updates);
}

SlideVerdict aggregate_slide(std::span<const VisitVerdict> visits, AggregationRule rule, double threshold,
                             bool decisive_unzoomed) {
  SlideVerdict v;
  v.visits.assign(visits.begin(), visits.end());
  v.rule = rule;
  std::size_t votes = 0;
  bool decisive_hit = false;
  for (const auto& visit : visits) {
    votes += visit.prediction == 1 ? 1 : 0;
    v.zooms += visit.zoomed ? 1 : 0;
    if (visit.prediction == 1 && (visit.zoomed || decisive_unzoomed)) decisive_hit = true;
  }
  v.tumor_vote_fraction = visits.empty() ? 0.0 : static_cast<double>(votes) / static_cast<double>(visits.size());
  if (rule == AggregationRule::AnyZoomedTumor) {
    v.label = decisive_hit ? 1 : 0;
  } else {
    v.label = (votes > 0 && v.tumor_vote_fraction >= threshold) ? 1 : 0;
  }
  return v;
}

SlideVerdict classify_trajectory(const DecisionParams& params, const Trajectory& traj, AggregationRule rule,
                                 double threshold, bool decisive_unzoomed) {
  const std::size_t f = params.feature_dim();
  std::vector<VisitVerdict> visits;
  visits.reserve(traj.steps.size());
  if (!traj.steps.empty()) {
    std::vector<double> inputs;
    inputs.reserve(traj.steps.size() * f);
    for (const auto& step : traj.steps) inputs.insert(inputs.end(), step.decision_input.begin(), step.decision_input.end());
    Tape tape;
    Var z = params.logits(tape, tape.constant(inputs, {traj.steps.size(), f}));
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      visits.push_back({argmax2({z[2 * t], z[2 * t + 1]}), traj.steps[t].zoomed});
    }
  }
  SlideVerdict v = aggregate_slide(visits, rule, threshold, decisive_unzoomed);
  v.slide_id = traj.slide_id;
  v.true_label = traj.label;
  v.teacher_passes = traj.teacher_passes;
  return v;
}

std::string to_string(AggregationRule rule) {
  return rule == AggregationRule::AnyZoomedTumor ? "any_zoomed_tumor" : "fraction";
}

AggregationRule parse_aggregation_rule(const std::string& name) {
  if (name == "any_zoomed_tumor") return AggregationRule::AnyZoomedTumor;
  if (name == "fraction") return AggregationRule::Fraction;
  throw ParameterError("unknown aggregation rule '" + name + "'");
}

void write_verdict(std::ostream& out, const SlideVerdict& v) {
  nlohmann::ordered_json rec;
  rec["slide_id"] = v.slide_id;
  rec["true_label"] = static_cast<int>(v.true_label);
  rec["predicted_label"] = v.label;
  rec["vote_fraction"] = v.tumor_vote_fraction;
  rec["visits"] = v.visits.size();
  rec["zooms"] = v.zooms;
  rec["rule"] = to_string(v.rule);
  out << rec.dump() << '\n';
}

}  // namespace pathsearch
