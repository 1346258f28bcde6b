#include "pathsearch/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pathsearch/errors.hpp"

namespace pathsearch {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "none" : s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "none") return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(std::stoul(s.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

void set_trainable(Tensor& t) { t.set_requires_grad(true); }

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TeacherModel::TeacherModel(Level level, std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng)
    : level_(level), input_dim_(input_dim) {
  if (input_dim == 0) throw ParameterError("teacher input dimension must be positive");
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    if (width == 0) throw ParameterError("hidden widths must be positive");
    layers_.emplace_back(in, width, rng);
    in = width;
  }
  head_ = Dense(in, 2, rng);
}

TeacherModel TeacherModel::zeros(Level level, std::size_t input_dim, const std::vector<std::size_t>& hidden) {
  TeacherModel m;
  m.level_ = level;
  m.input_dim_ = input_dim;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    m.layers_.push_back(Dense::zeros(in, width));
    in = width;
  }
  m.head_ = Dense::zeros(in, 2);
  return m;
}

std::vector<Tensor*> TeacherModel::parameters() {
  std::vector<Tensor*> params;
  for (auto& layer : layers_) {
    params.push_back(&layer.weight());
    params.push_back(&layer.bias());
  }
  params.push_back(&head_.weight());
  params.push_back(&head_.bias());
  return params;
}

Checkpoint TeacherModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "teacher";
  ckpt.attributes["level"] = std::to_string(static_cast<int>(level_));
  ckpt.attributes["input_dim"] = std::to_string(input_dim_);
  std::vector<std::size_t> hidden;
  for (const auto& layer : layers_) hidden.push_back(layer.out_dim());
  ckpt.attributes["hidden"] = join_sizes(hidden);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    ckpt.tensors.emplace_back("layer" + std::to_string(i) + ".weight", layers_[i].weight());
    ckpt.tensors.emplace_back("layer" + std::to_string(i) + ".bias", layers_[i].bias());
  }
  ckpt.tensors.emplace_back("head.weight", head_.weight());
  ckpt.tensors.emplace_back("head.bias", head_.bias());
  return ckpt;
}

TeacherModel TeacherModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "teacher") throw FormatError("checkpoint is not a teacher model");
  const int level = std::stoi(ckpt.attribute("level"));
  if (level != 1 && level != 2) throw FormatError("teacher level must be 1 or 2");
  const auto hidden = split_sizes(ckpt.attribute("hidden"));
  TeacherModel m = zeros(static_cast<Level>(level), std::stoul(ckpt.attribute("input_dim")), hidden);
  auto load = [&ckpt](Tensor& dst, const std::string& name) {
    const Tensor& src = ckpt.tensor(name);
    if (src.shape() != dst.shape()) throw FormatError("tensor '" + name + "' has the wrong shape");
    dst = src;
    set_trainable(dst);
  };
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    load(m.layers_[i].weight(), "layer" + std::to_string(i) + ".weight");
    load(m.layers_[i].bias(), "layer" + std::to_string(i) + ".bias");
  }
  load(m.head_.weight(), "head.weight");
  load(m.head_.bias(), "head.bias");
  return m;
}

bool operator==(const TeacherModel& a, const TeacherModel& b) {
  if (a.level_ != b.level_ || a.input_dim_ != b.input_dim_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (!same_values(a.layers_[i].weight(), b.layers_[i].weight()) ||
        !same_values(a.layers_[i].bias(), b.layers_[i].bias()))
      return false;
  }
  return same_values(a.head_.weight(), b.head_.weight()) && same_values(a.head_.bias(), b.head_.bias());
}

namespace {

TeacherOutputs evaluate_on(Tape& tape, const TeacherModel& teacher, std::span<const double> patches,
                           std::size_t count) {
  if (patches.size() != count * teacher.input_dim()) {
    throw ShapeError("evaluate_teacher: patch data does not match teacher input dimension");
  }
  TeacherOutputs out;
  out.count = count;
  out.feature_dim = teacher.feature_dim();
  if (count == 0) return out;
  tape.clear();
  Var x = tape.constant(patches, {count, teacher.input_dim()});
  Var f = teacher.features(tape, x);
  Var z = teacher.logits(tape, f);
  out.features.assign(f.data().begin(), f.data().end());
  out.logits.assign(z.data().begin(), z.data().end());
  out.tumor_prob.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z0 = out.logits[2 * i], z1 = out.logits[2 * i + 1];
    out.tumor_prob[i] = 1.0 / (1.0 + std::exp(z0 - z1));
  }
  return out;
}

}  // namespace

TeacherOutputs evaluate_teacher(const TeacherModel& teacher, std::span<const double> patches, std::size_t count) {
  Tape tape;
  return evaluate_on(tape, teacher, patches, count);
}

std::vector<Bag> build_bags(std::span<const SlidePyramid> slides, Level level, std::size_t bag_size,
                            std::uint64_t seed) {
  if (bag_size == 0) throw ParameterError("bag size must be positive");
  std::vector<Bag> bags;
  bags.reserve(slides.size());
  for (const auto& slide : slides) {
    const FeatureGrid& grid = slide.grid(level);
    if (bag_size > grid.cells()) {
      throw ParameterError("bag size " + std::to_string(bag_size) + " exceeds the " +
                           std::to_string(grid.cells()) + " cells available");
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(slide.id)));
    std::vector<std::size_t> all(grid.cells());
    std::iota(all.begin(), all.end(), 0);
    Bag bag;
    bag.slide_id = slide.id;
    bag.level = level;
    bag.label = slide.label;
    bag.dim = grid.dim();
    std::sample(all.begin(), all.end(), std::back_inserter(bag.cells), bag_size, rng);
    bag.instances.reserve(bag_size * bag.dim);
    for (std::size_t idx : bag.cells) {
      auto cell = grid.cell(idx);
      bag.instances.insert(bag.instances.end(), cell.begin(), cell.end());
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

std::vector<double> score_instances(const TeacherModel& teacher, const Bag& bag) {
  if (bag.level != teacher.level()) throw ContractError("teacher level does not match bag level");
  return evaluate_teacher(teacher, bag.instances, bag.size()).tumor_prob;
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
  if (scores.empty()) throw ContractError("select_top_k: no scores");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(k, scores.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&scores](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(take);
  return idx;
}

TopKSet select_top_k(const Bag& bag, std::span<const double> scores, std::size_t k) {
  if (scores.size() != bag.size()) throw ContractError("select_top_k: one score per instance required");
  return {bag.slide_id, bag.level, select_top_k(scores, k), bag.label};
}

TeacherTrainResult train_teacher(std::span<const Bag> bags, const TeacherConfig& cfg, Rng& rng) {
  if (bags.empty()) throw TrainingError("no bags to train on");
  if (cfg.top_k == 0) throw ParameterError("top-k must be positive");
  const Level level = bags.front().level;
  const std::size_t dim = bags.front().dim;
  bool has_benign = false, has_tumor = false;
  std::size_t total = 0;
  for (const auto& bag : bags) {
    if (bag.level != level) throw TrainingError("bags mix pyramid levels");
    if (bag.dim != dim) throw TrainingError("bags mix feature dimensions");
    if (bag.size() == 0) throw TrainingError("empty bag");
    (bag.label == SlideLabel::Tumor ? has_tumor : has_benign) = true;
    total += bag.size();
  }
  if (!has_benign || !has_tumor) throw TrainingError("teacher training needs both benign and tumor bags");

  std::vector<double> all_instances;
  all_instances.reserve(total * dim);
  for (const auto& bag : bags) all_instances.insert(all_instances.end(), bag.instances.begin(), bag.instances.end());

  TeacherTrainResult result{TeacherModel(level, dim, cfg.hidden, rng), {}};
  TeacherModel& model = result.model;
  auto params = model.parameters();
  Adam optimizer(cfg.lr);

  std::vector<double> batch, targets;
  Tape tape, scoring;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto scores = evaluate_on(scoring, model, all_instances, total).tumor_prob;
    batch.clear();
    targets.clear();
    std::size_t offset = 0;
    for (const auto& bag : bags) {
      std::span<const double> bag_scores(scores.data() + offset, bag.size());
      for (std::size_t i : select_top_k(bag_scores, cfg.top_k)) {
        auto inst = bag.instance(i);
        batch.insert(batch.end(), inst.begin(), inst.end());
        const bool tumor = bag.label == SlideLabel::Tumor;
        targets.push_back(tumor ? 0.0 : 1.0);
        targets.push_back(tumor ? 1.0 : 0.0);
      }
      offset += bag.size();
    }
    const std::size_t rows = targets.size() / 2;
    tape.clear();
    zero_grads(params);
    Var x = tape.constant(batch, {rows, dim});
    Var y = tape.constant(targets, {rows, 2});
    Var probs = softmax(model.logits(tape, model.features(tape, x)));
    Var loss = cross_entropy(probs, y);
    tape.backward(loss);
    optimizer.step(params);
    result.loss_history.push_back(loss.value());
  }
  zero_grads(params);
  return result;
}

std::vector<double> extract_features(const TeacherModel& teacher, std::span<const double> patch) {
  auto out = evaluate_teacher(teacher, patch, 1);
  return std::move(out.features);
}

std::array<double, 2> teacher_logits(const TeacherModel& teacher, std::span<const double> patch) {
  return evaluate_teacher(teacher, patch, 1).logit(0);
}

int teacher_predict(const TeacherModel& teacher, std::span<const double> patch) {
  return argmax2(teacher_logits(teacher, patch));
}

// ---------------------------------------------------------------------------
// Scorers

std::vector<CellEvaluation> CellScorer::evaluate_all(const SlidePyramid& slide) const {
  const FeatureGrid& grid = slide.grid(level());
  std::vector<CellEvaluation> out;
  out.reserve(grid.cells());
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c) out.push_back(evaluate(slide, r, c));
  return out;
}

namespace {

CellEvaluation from_outputs(const TeacherOutputs& out, std::size_t i) {
  CellEvaluation e;
  auto f = out.feature(i);
  e.features.assign(f.begin(), f.end());
  e.logits = out.logit(i);
  e.tumor_prob = out.tumor_prob[i];
  e.prediction = argmax2(e.logits);
  return e;
}

}  // namespace

CellEvaluation TeacherScorer::evaluate(const SlidePyramid& slide, std::size_t row, std::size_t col) const {
  return from_outputs(evaluate_teacher(*model_, slide.grid(level()).at(row, col), 1), 0);
}

CellEvaluation TeacherScorer::evaluate_pooled(const SlidePyramid& slide, AgentPosition pos) const {
  if (level() != Level::High) throw ContractError("pooled evaluation is only defined for level 2");
  std::vector<double> pooled(slide.feature_dim(), 0.0);
  for (int sub = 0; sub < 4; ++sub) {
    auto child = get_state(slide, pos, Level::High, sub);
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += 0.25 * child[k];
  }
  return from_outputs(evaluate_teacher(*model_, pooled, 1), 0);
}

std::vector<CellEvaluation> TeacherScorer::evaluate_all(const SlidePyramid& slide) const {
  const FeatureGrid& grid = slide.grid(level());
  auto out = evaluate_teacher(*model_, grid.values(), grid.cells());
  std::vector<CellEvaluation> evals;
  evals.reserve(grid.cells());
  for (std::size_t i = 0; i < grid.cells(); ++i) evals.push_back(from_outputs(out, i));
  return evals;
}

CellEvaluation MaskOracle::make(bool tumor, std::span<const double> patch) const {
  CellEvaluation e;
  e.features.assign(feature_dim_, 0.0);
  if (feature_dim_ > 0) e.features[0] = tumor ? 1.0 : -1.0;
  for (std::size_t k = 0; k + 1 < feature_dim_ && k < patch.size(); ++k) e.features[k + 1] = patch[k];
  e.logits = tumor ? std::array<double, 2>{0.0, margin_} : std::array<double, 2>{margin_, 0.0};
  e.tumor_prob = 1.0 / (1.0 + std::exp(e.logits[0] - e.logits[1]));
  e.prediction = tumor ? 1 : 0;
  return e;
}

CellEvaluation MaskOracle::evaluate(const SlidePyramid& slide, std::size_t row, std::size_t col) const {
  return make(slide.tumor_at(level_, row, col), slide.grid(level_).at(row, col));
}

CellEvaluation MaskOracle::evaluate_pooled(const SlidePyramid& slide, AgentPosition pos) const {
  return make(slide.tumor_lo(pos.row, pos.col), get_state(slide, pos, Level::High, 0));
}

}  // namespace pathsearch
