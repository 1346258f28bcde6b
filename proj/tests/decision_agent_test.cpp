#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "pathsearch/decision_agent.hpp"
#include "pathsearch/errors.hpp"

using namespace pathsearch;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::array<double, 2> random_pair(Rng& rng) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  const double p = u(rng);
  return {p, 1.0 - p};
}

double kl2(std::array<double, 2> p, std::array<double, 2> q) {
  return p[0] * std::log(p[0] / q[0]) + p[1] * std::log(p[1] / q[1]);
}

// Teacher distribution p with KL(p || q) == target, found by bisection on p0
// in (q0, 1), where KL grows monotonically.
std::array<double, 2> solve_kl(std::array<double, 2> q, double target) {
  double lo = q[0], hi = 1.0 - 1e-15;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kl2({mid, 1.0 - mid}, q) < target ? lo : hi) = mid;
  }
  return {lo, 1.0 - lo};
}

Trajectory synthetic_trajectory(std::size_t dim, SlideLabel label, Rng& rng) {
  Trajectory traj;
  traj.label = label;
  const double shift = label == SlideLabel::Tumor ? 1.0 : -1.0;
  for (int t = 0; t < 10; ++t) {
    TrajectoryStep s;
    s.decision_input = random_vector(dim, rng);
    for (auto& x : s.decision_input) x += shift;
    s.teacher_logits = {-2.0 * shift, 2.0 * shift};
    s.zoomed = t % 3 == 0;
    traj.steps.push_back(s);
  }
  return traj;
}

}  // namespace

TEST(SoftLabel, Examples) {
  for (double h : {0.5, 1.0, 5.0}) {
    auto p = soft_label(std::vector<double>{0.0, 0.0}, h);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
  auto p = soft_label(std::vector<double>{1.5, -0.5}, 1.0);
  const double e = std::exp(1.5) / (std::exp(1.5) + std::exp(-0.5));
  EXPECT_NEAR(p[0], e, 1e-15);
}

TEST(SoftLabel, HigherTemperatureShrinksGap) {
  double previous = 1.0;
  for (double h : {1.0, 2.0, 5.0, 10.0}) {
    auto p = soft_label(std::vector<double>{2.0, 0.0}, h);
    const double gap = std::abs(p[0] - p[1]);
    EXPECT_LT(gap, previous);
    EXPECT_NEAR(gap, std::tanh(1.0 / h), 1e-15);  // (e^a - 1)/(e^a + 1) with a = 2/H
    previous = gap;
  }
}

TEST(DistillConfig, Validation) {
  DistillConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epsilon = 1.1;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg.epsilon = 0.5;
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(DecisionForward, SoftHardAndLabel) {
  Rng rng(1);
  DecisionParams params(6, rng);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = random_vector(6, rng);
    Tape tape;
    Var z = params.logits(tape, tape.constant(v, {1, 6}));
    auto out = decision_forward(params, v, 5.0);
    auto soft = soft_label(z.data(), 5.0), hard = soft_label(z.data(), 1.0);
    EXPECT_NEAR(out.soft[0], soft[0], 1e-15);
    EXPECT_NEAR(out.hard[1], hard[1], 1e-15);
    EXPECT_EQ(out.label, z[1] > z[0] ? 1 : 0);
    for (double h : {0.5, 2.0, 100.0}) EXPECT_EQ(decision_forward(params, v, h).label, out.label);
  }
  auto zero = DecisionParams::zeros(6);
  EXPECT_EQ(decision_forward(zero, std::vector<double>(6, 1.0), 5.0).label, 0);
}

TEST(DistillationLoss, LimitCases) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto t = random_pair(rng), s = random_pair(rng), probs = random_pair(rng);
    std::array<double, 2> onehot{0.0, 0.0};
    onehot[static_cast<std::size_t>(trial % 2)] = 1.0;
    const double h = 1.0 + trial % 7;
    const double ce = -std::log(probs[static_cast<std::size_t>(trial % 2)]);
    EXPECT_NEAR(distillation_loss(t, s, onehot, probs, 0.0, h), ce, 1e-12);
    EXPECT_NEAR(distillation_loss(t, s, onehot, probs, 1.0, h), h * h * kl2(t, s), 1e-12);
    EXPECT_NEAR(distillation_loss(s, s, onehot, probs, 1.0, h), 0.0, 1e-12);
    EXPECT_GE(distillation_loss(t, s, onehot, probs, 0.8, h), 0.0);
  }
}

TEST(DistillationLoss, ClosedFormExample) {
  // KL = 0.1 and CE = 0.7 constructed exactly; 0.8 * 25 * 0.1 + 0.2 * 0.7.
  const std::array<double, 2> student{0.6, 0.4};
  const auto teacher = solve_kl(student, 0.1);
  ASSERT_NEAR(kl2(teacher, student), 0.1, 1e-14);
  const std::array<double, 2> probs{std::exp(-0.7), 1.0 - std::exp(-0.7)};
  const std::array<double, 2> onehot{1.0, 0.0};
  EXPECT_NEAR(distillation_loss(teacher, student, onehot, probs, 0.8, 5.0), 2.14, 1e-12);
}

TEST(DistillationLoss, TapeFormMatchesValueForm) {
  Rng rng(3);
  DistillConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    auto zs = random_vector(2, rng, 2.0), zt = random_vector(2, rng, 2.0);
    std::vector<double> onehot{0.0, 1.0};
    Tape tape;
    Var loss = distillation_loss(tape.constant(zs, {1, 2}), tape.constant(zt, {1, 2}), tape.constant(onehot, {1, 2}), cfg);
    auto st = soft_label(zt, cfg.temperature), ss = soft_label(zs, cfg.temperature), hard = soft_label(zs, 1.0);
    EXPECT_NEAR(loss.value(), distillation_loss(st, ss, onehot, hard, cfg.epsilon, cfg.temperature), 1e-12);
  }
}

TEST(DistillationLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int point = 0; point < 100; ++point) {
    DecisionParams params(6, rng);
    auto x = random_vector(4 * 6, rng);
    auto zt = random_vector(4 * 2, rng, 2.0);
    std::vector<double> onehot{1, 0, 0, 1, 0, 1, 1, 0};
    DistillConfig cfg;
    cfg.epsilon = point % 5 == 0 ? 0.0 : (point % 5 == 1 ? 1.0 : 0.8);
    auto f = [&](Tape& tape) {
      return distillation_loss(params.logits(tape, tape.constant(x, {4, 6})), tape.constant(zt, {4, 2}),
                               tape.constant(onehot, {4, 2}), cfg);
    };
    ASSERT_LT(grad_check(f, params.parameters(), 1e-5).max_relative_error, 1e-4) << "point " << point;
  }
}

TEST(DistillationLoss, KlTermVanishesWithTemperature) {
  const std::vector<double> zt{3.0, -1.0}, zs{-0.5, 1.5};
  double previous = INFINITY;
  for (double h : {1.0, 2.0, 5.0, 10.0, 100.0}) {
    const double kl = kl2(soft_label(zt, h), soft_label(zs, h));
    EXPECT_LT(kl, previous);
    previous = kl;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(TrainDecision, EmptySetThrows) {
  auto params = DecisionParams::zeros(4);
  EXPECT_THROW(train_decision(params, std::span<const Trajectory>(), DistillConfig{}, 1e-3), ParameterError);
}

TEST(TrainDecision, LossDecreasesOnSmoothedBasis) {
  // Repeated passes over a fixed set of trajectories; per-pass mean loss
  // smoothed over blocks of 5 passes.
  Rng rng(5);
  DecisionParams params(6, rng);
  std::vector<Trajectory> set;
  for (int i = 0; i < 20; ++i) set.push_back(synthetic_trajectory(6, i % 2 ? SlideLabel::Tumor : SlideLabel::Benign, rng));
  std::vector<double> losses;
  for (int pass = 0; pass < 50; ++pass) {
    double total = 0.0;
    for (const auto& traj : set) total += train_decision(params, std::span(&traj, 1), DistillConfig{}, 1e-2);
    losses.push_back(total / set.size());
  }
  auto block = [&](std::size_t b) { return std::accumulate(losses.begin() + 5 * b, losses.begin() + 5 * (b + 1), 0.0); };
  EXPECT_LT(block(9), block(0));
  for (std::size_t b = 1; b < 10; ++b) EXPECT_LE(block(b), block(b - 1)) << "block " << b;
}

TEST(TrainDecision, ZoomedStepsDistillFromRecordedLogits) {
  // With eps = 1 only the teacher term remains; a step's gradient is zero
  // exactly when the student already matches its recorded teacher logits.
  auto params = DecisionParams::zeros(2);
  Trajectory traj;
  traj.label = SlideLabel::Tumor;
  TrajectoryStep s;
  s.decision_input = {1.0, -1.0};
  s.teacher_logits = {0.0, 0.0};
  s.zoomed = true;
  traj.steps.push_back(s);
  DistillConfig cfg;
  cfg.epsilon = 1.0;
  EXPECT_NEAR(train_decision(params, std::span(&traj, 1), cfg, 0.1), 0.0, 1e-15);
  for (Tensor* t : params.parameters())
    for (double v : t->data()) EXPECT_EQ(v, 0.0);
}

TEST(AggregateSlide, Examples) {
  std::vector<VisitVerdict> none{{0, true}, {0, false}, {0, true}};
  EXPECT_EQ(aggregate_slide(none, AggregationRule::AnyZoomedTumor, 0.5).label, 0);
  EXPECT_EQ(aggregate_slide(none, AggregationRule::Fraction, 0.5).label, 0);

  std::vector<VisitVerdict> one{{0, false}, {1, true}, {0, false}, {0, false}};
  EXPECT_EQ(aggregate_slide(one, AggregationRule::AnyZoomedTumor, 0.5).label, 1);
  EXPECT_EQ(aggregate_slide(one, AggregationRule::Fraction, 0.5).label, 0);

  std::vector<VisitVerdict> votes{{1, false}, {1, false}, {0, false}, {0, false}};
  auto v = aggregate_slide(votes, AggregationRule::Fraction, 0.5);
  EXPECT_EQ(v.label, 1);
  EXPECT_DOUBLE_EQ(v.tumor_vote_fraction, 0.5);
  EXPECT_EQ(aggregate_slide(votes, AggregationRule::AnyZoomedTumor, 0.5).label, 0);
  EXPECT_EQ(aggregate_slide(votes, AggregationRule::AnyZoomedTumor, 0.5, true).label, 1);
  EXPECT_EQ(aggregate_slide(votes, AggregationRule::Fraction, 0.75).label, 0);
}

TEST(AggregateSlide, RuleNamesRoundTrip) {
  for (auto rule : {AggregationRule::AnyZoomedTumor, AggregationRule::Fraction})
    EXPECT_EQ(parse_aggregation_rule(to_string(rule)), rule);
  EXPECT_THROW(parse_aggregation_rule("majority"), ParameterError);
}

TEST(ClassifyTrajectory, CountsZoomsAndVotes) {
  Rng rng(6);
  DecisionParams params(4, rng);
  Trajectory traj = synthetic_trajectory(4, SlideLabel::Tumor, rng);
  for (auto& s : traj.steps) s.decision_input.resize(4);
  traj.teacher_passes = 17;
  auto v = classify_trajectory(params, traj, AggregationRule::AnyZoomedTumor, 0.5);
  ASSERT_EQ(v.visits.size(), traj.steps.size());
  std::size_t zooms = 0, votes = 0;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const int label = decision_forward(params, traj.steps[i].decision_input, 1.0).label;
    EXPECT_EQ(v.visits[i].prediction, label);
    zooms += traj.steps[i].zoomed;
    votes += static_cast<std::size_t>(label);
  }
  EXPECT_EQ(v.zooms, zooms);
  EXPECT_EQ(v.teacher_passes, 17u);
  EXPECT_DOUBLE_EQ(v.tumor_vote_fraction, static_cast<double>(votes) / traj.steps.size());
}

TEST(DecisionParams, CheckpointRoundTripAndVerdictRecord) {
  Rng rng(7);
  DecisionParams params(5, rng);
  std::stringstream buf;
  write_checkpoint(buf, params.to_checkpoint());
  auto back = DecisionParams::from_checkpoint(read_checkpoint(buf));
  auto v = random_vector(5, rng);
  EXPECT_EQ(decision_forward(back, v, 5.0).soft, decision_forward(params, v, 5.0).soft);

  SlideVerdict verdict;
  verdict.slide_id = 3;
  verdict.true_label = SlideLabel::Tumor;
  verdict.label = 1;
  verdict.visits.resize(4);
  std::stringstream out;
  write_verdict(out, verdict);
  const auto line = out.str();
  for (const char* key : {"slide_id", "true_label", "predicted_label", "vote_fraction", "visits", "zooms", "rule"})
    EXPECT_NE(line.find(std::string("\"") + key + "\""), std::string::npos) << key;
}
