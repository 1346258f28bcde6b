#pragma once

// Multiple-instance teacher: a slide is a bag of sampled patches that only
// carries the slide label. Each epoch the K patches with the highest tumor
// probability inherit the bag label and the network is fit to them with
// cross-entropy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pathsearch/checkpoint.hpp"
#include "pathsearch/nn.hpp"
#include "pathsearch/slide.hpp"

namespace pathsearch {

struct TeacherConfig {
  std::vector<std::size_t> hidden{32};
  std::size_t top_k = 8;
  std::size_t bag_size = 64;
  std::size_t epochs = 150;
  double lr = 1e-3;
};

struct Bag {
  int slide_id = 0;
  Level level = Level::Low;
  SlideLabel label = SlideLabel::Benign;
  std::size_t dim = 0;
  std::vector<std::size_t> cells;  // row-major indices into the level grid
  std::vector<double> instances;   // cells.size() x dim

  std::size_t size() const { return cells.size(); }
  std::span<const double> instance(std::size_t i) const { return {instances.data() + i * dim, dim}; }
};

struct TopKSet {
  int slide_id = 0;
  Level level = Level::Low;
  std::vector<std::size_t> indices;  // into the bag, best first
  SlideLabel label = SlideLabel::Benign;
};

class TeacherModel {
 public:
  TeacherModel() = default;
  TeacherModel(Level level, std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng);
  static TeacherModel zeros(Level level, std::size_t input_dim, const std::vector<std::size_t>& hidden);

  Level level() const { return level_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t feature_dim() const { return head_.in_dim(); }

  /// Backbone output (penultimate layer) for a batch x [m x D].
  Var features(Tape& tape, Var x) { return backbone(*this, tape, x); }
  Var features(Tape& tape, Var x) const { return backbone(*this, tape, x); }
  Var logits(Tape& tape, Var features) { return head_.forward(tape, features); }
  Var logits(Tape& tape, Var features) const { return head_.forward(tape, features); }

  std::vector<Tensor*> parameters();

  Checkpoint to_checkpoint() const;
  static TeacherModel from_checkpoint(const Checkpoint& ckpt);

  friend bool operator==(const TeacherModel& a, const TeacherModel& b);

 private:
  template <class Self>
  static Var backbone(Self& self, Tape& tape, Var x) {
    for (auto& layer : self.layers_) x = tanh(layer.forward(tape, x));
    return x;
  }

  Level level_ = Level::Low;
  std::size_t input_dim_ = 0;
  std::vector<Dense> layers_;
  Dense head_;
};

/// Features, logits and tumor probabilities for a batch of patches.
struct TeacherOutputs {
  std::size_t count = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // count x feature_dim
  std::vector<double> logits;    // count x 2
  std::vector<double> tumor_prob;

  std::span<const double> feature(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
  std::array<double, 2> logit(std::size_t i) const { return {logits[2 * i], logits[2 * i + 1]}; }
};

TeacherOutputs evaluate_teacher(const TeacherModel& teacher, std::span<const double> patches, std::size_t count);

/// Samples `bag_size` distinct cells per slide, uniformly, from the level grid.
std::vector<Bag> build_bags(std::span<const SlidePyramid> slides, Level level, std::size_t bag_size,
                            std::uint64_t seed);

/// Tumor-class probability of every instance in the bag.
std::vector<double> score_instances(const TeacherModel& teacher, const Bag& bag);

/// Indices of the k largest scores, best first; ties go to the lower index.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);
TopKSet select_top_k(const Bag& bag, std::span<const double> scores, std::size_t k);

struct TeacherTrainResult {
  TeacherModel model;
  std::vector<double> loss_history;  // cross-entropy on the selected set, per epoch
};

TeacherTrainResult train_teacher(std::span<const Bag> bags, const TeacherConfig& cfg, Rng& rng);

std::vector<double> extract_features(const TeacherModel& teacher, std::span<const double> patch);
std::array<double, 2> teacher_logits(const TeacherModel& teacher, std::span<const double> patch);
/// argmax of the softmax output; ties resolve to class 0.
int teacher_predict(const TeacherModel& teacher, std::span<const double> patch);

inline int argmax2(const std::array<double, 2>& logits) { return logits[1] > logits[0] ? 1 : 0; }

// ---------------------------------------------------------------------------
// Cell scoring used by the environment. A scorer answers for one level.

struct CellEvaluation {
  std::vector<double> features;
  std::array<double, 2> logits{0.0, 0.0};
  double tumor_prob = 0.5;
  int prediction = 0;
};

class CellScorer {
 public:
  virtual ~CellScorer() = default;
  virtual Level level() const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// Evaluates cell (row, col) of the scorer's level grid.
  virtual CellEvaluation evaluate(const SlidePyramid& slide, std::size_t row, std::size_t col) const = 0;
  /// Level-2 only: evaluates the mean of the four children under `pos`.
  virtual CellEvaluation evaluate_pooled(const SlidePyramid& slide, AgentPosition pos) const = 0;
  /// Every cell of the level grid, row-major.
  virtual std::vector<CellEvaluation> evaluate_all(const SlidePyramid& slide) const;
};

class TeacherScorer final : public CellScorer {
 public:
  explicit TeacherScorer(const TeacherModel& model) : model_(&model) {}
  Level level() const override { return model_->level(); }
  std::size_t feature_dim() const override { return model_->feature_dim(); }
  CellEvaluation evaluate(const SlidePyramid& slide, std::size_t row, std::size_t col) const override;
  CellEvaluation evaluate_pooled(const SlidePyramid& slide, AgentPosition pos) const override;
  std::vector<CellEvaluation> evaluate_all(const SlidePyramid& slide) const override;

 private:
  const TeacherModel* model_;
};

/// Reads the hidden tumor mask. Features are [+1 | -1 for tumor | benign,
/// then the raw patch values], truncated or zero-padded to `feature_dim`.
class MaskOracle final : public CellScorer {
 public:
  MaskOracle(Level level, std::size_t feature_dim, double logit_margin = 8.0)
      : level_(level), feature_dim_(feature_dim), margin_(logit_margin) {}
  Level level() const override { return level_; }
  std::size_t feature_dim() const override { return feature_dim_; }
  CellEvaluation evaluate(const SlidePyramid& slide, std::size_t row, std::size_t col) const override;
  CellEvaluation evaluate_pooled(const SlidePyramid& slide, AgentPosition pos) const override;

 private:
  CellEvaluation make(bool tumor, std::span<const double> patch) const;

  Level level_;
  std::size_t feature_dim_;
  double margin_;
};

}  // namespace pathsearch
