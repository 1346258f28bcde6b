#include "pathsearch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pathsearch {

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_rank(const Shape& shape) {
  if (shape.size() > 2) {
    throw ShapeError("tensors of rank > 2 are not supported");
  }
}

std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

double clamped_log(double p) { return std::log(std::max(p, kProbEpsilon)); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  check_rank(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  check_rank(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length does not match shape");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

void Tensor::set_requires_grad(bool flag) {
  requires_grad_ = flag;
  if (!flag) grad_.clear();
}

void Tensor::zero_grad() {
  if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (delta.size() != data_.size()) {
    throw ShapeError("gradient length does not match tensor");
  }
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i) grad_[i] += delta[i];
}

// ---------------------------------------------------------------------------
// Var

Shape Var::shape() const {
  const auto& n = tape_->node(id_);
  if (n.rank == 2) return {n.rows, n.cols};
  return {n.cols};
}

std::size_t Var::rows() const { return tape_->node(id_).rows; }
std::size_t Var::cols() const { return tape_->node(id_).cols; }
std::size_t Var::size() const {
  const auto& n = tape_->node(id_);
  return std::size_t{n.rows} * n.cols;
}

std::span<const double> Var::data() const { return tape_->values(id_); }

double Var::value() const {
  if (size() != 1) throw ContractError("value() requires a scalar node");
  return data()[0];
}

Tensor Var::to_tensor() const {
  auto d = data();
  return Tensor(shape(), std::vector<double>(d.begin(), d.end()));
}

// ---------------------------------------------------------------------------
// Tape

std::uint32_t Tape::push(Op op, std::uint32_t a, std::uint32_t b, std::size_t rows,
                         std::size_t cols, std::uint8_t rank, bool requires_grad) {
  if (backward_done_) {
    throw ContractError("cannot record onto a tape that has been backpropagated");
  }
  Node n{};
  n.op = op;
  n.a = a;
  n.b = b;
  n.rows = static_cast<std::uint32_t>(rows);
  n.cols = static_cast<std::uint32_t>(cols);
  n.rank = rank;
  n.requires_grad = requires_grad;
  n.offset = values_.size();
  n.param = nullptr;
  values_.resize(values_.size() + rows * cols);
  nodes_.push_back(n);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

std::span<const double> Tape::values(std::uint32_t id) const {
  const auto& n = nodes_[id];
  return {values_.data() + n.offset, std::size_t{n.rows} * n.cols};
}

Var Tape::constant(const Tensor& t) { return constant(t.data(), t.shape()); }

Var Tape::constant(std::span<const double> values, Shape shape) {
  check_rank(shape);
  if (shape_product(shape) != values.size()) {
    throw ShapeError("constant data length does not match shape");
  }
  const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
  const std::size_t cols = values.size() / std::max<std::size_t>(rows, 1);
  auto id = push(Op::Constant, 0, 0, rows, cols, shape.size() == 2 ? 2 : 1, false);
  std::copy(values.begin(), values.end(), out(id));
  return {this, id};
}

Var Tape::param(Tensor& t) {
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  auto id = push(Op::Param, 0, 0, rows, cols, t.shape().size() == 2 ? 2 : 1, t.requires_grad());
  nodes_[id].param = &t;
  std::copy(t.data().begin(), t.data().end(), out(id));
  return {this, id};
}

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  backward_done_ = false;
}

std::span<const double> Tape::grad(Var v) const {
  if (grads_.empty()) throw ContractError("grad() called before backward()");
  const auto& n = nodes_[v.id()];
  return {grads_.data() + n.offset, std::size_t{n.rows} * n.cols};
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  if (backward_done_) throw ContractError("tape has already been backpropagated");
  if (loss.size() != 1) throw ContractError("backward() requires a scalar loss");
  backward_done_ = true;
  grads_.assign(values_.size(), 0.0);
  grads_[nodes_[loss.id()].offset] = 1.0;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (n.op == Op::Param) {
      n.param->accumulate_grad({grads_.data() + n.offset, std::size_t{n.rows} * n.cols});
      continue;
    }
    backprop_node(id);
  }
}

namespace {

// Four independent partial sums keep the reduction off a single dependency
// chain; the summation order is fixed, so results stay reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    s0 += a[c] * b[c];
    s1 += a[c + 1] * b[c + 1];
    s2 += a[c + 2] * b[c + 2];
    s3 += a[c + 3] * b[c + 3];
  }
  for (; c < n; ++c) s0 += a[c] * b[c];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void Tape::backprop_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const std::size_t count = std::size_t{n.rows} * n.cols;
  const double* g = grads_.data() + n.offset;
  const double* y = values_.data() + n.offset;
  const Node& na = nodes_[n.a];
  const Node& nb = nodes_[n.b];
  double* ga = grads_.data() + na.offset;
  double* gb = grads_.data() + nb.offset;
  const double* xa = values_.data() + na.offset;
  const double* xb = values_.data() + nb.offset;

  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      break;
    case Op::MatMul: {
      const std::size_t m = na.rows, k = na.cols, p = nb.cols;
      if (na.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            ga[i * k + j] += dot(g + i * p, xb + j * p, p);
          }
        }
      }
      if (nb.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * p;
          for (std::size_t j = 0; j < k; ++j) {
            const double av = xa[i * k + j];
            if (av == 0.0) continue;
            double* gbrow = gb + j * p;
            for (std::size_t c = 0; c < p; ++c) gbrow[c] += av * grow[c];
          }
        }
      }
      break;
    }
    case Op::Add:
      if (na.requires_grad) for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      if (nb.requires_grad) for (std::size_t i = 0; i < count; ++i) gb[i] += g[i];
      break;
    case Op::AddRow:
      if (na.requires_grad) for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      if (nb.requires_grad) {
        for (std::size_t r = 0; r < n.rows; ++r)
          for (std::size_t c = 0; c < n.cols; ++c) gb[c] += g[r * n.cols + c];
      }
      break;
    case Op::Sub:
      if (na.requires_grad) for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      if (nb.requires_grad) for (std::size_t i = 0; i < count; ++i) gb[i] -= g[i];
      break;
    case Op::Mul:
      if (na.requires_grad) for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * xb[i];
      if (nb.requires_grad) for (std::size_t i = 0; i < count; ++i) gb[i] += g[i] * xa[i];
      break;
    case Op::Scale:
      if (na.requires_grad) for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * n.scalar;
      break;
    case Op::Tanh:
      if (na.requires_grad)
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    case Op::Sigmoid:
      if (na.requires_grad)
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    case Op::SliceCols:
      if (na.requires_grad) {
        for (std::size_t r = 0; r < n.rows; ++r)
          for (std::size_t c = 0; c < n.cols; ++c) ga[r * na.cols + n.aux + c] += g[r * n.cols + c];
      }
      break;
    case Op::SoftmaxRows:
      if (na.requires_grad) {
        const double inv_t = 1.0 / n.scalar;
        for (std::size_t r = 0; r < n.rows; ++r) {
          const double* yr = y + r * n.cols;
          const double* gr = g + r * n.cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < n.cols; ++c) dot += gr[c] * yr[c];
          for (std::size_t c = 0; c < n.cols; ++c)
            ga[r * n.cols + c] += inv_t * yr[c] * (gr[c] - dot);
        }
      }
      break;
    case Op::LogSoftmaxRows:
      if (na.requires_grad) {
        for (std::size_t r = 0; r < n.rows; ++r) {
          const double* yr = y + r * n.cols;
          const double* gr = g + r * n.cols;
          double total = 0.0;
          for (std::size_t c = 0; c < n.cols; ++c) total += gr[c];
          for (std::size_t c = 0; c < n.cols; ++c)
            ga[r * n.cols + c] += gr[c] - std::exp(yr[c]) * total;
        }
      }
      break;
    case Op::Sum:
      if (na.requires_grad) {
        const std::size_t an = std::size_t{na.rows} * na.cols;
        for (std::size_t i = 0; i < an; ++i) ga[i] += g[0];
      }
      break;
    case Op::Pick:
      if (na.requires_grad) ga[n.aux] += g[0];
      break;
    case Op::CrossEntropy: {
      const double w = g[0] / na.rows;
      const std::size_t an = std::size_t{na.rows} * na.cols;
      if (na.requires_grad) {
        for (std::size_t i = 0; i < an; ++i)
          if (xa[i] > kProbEpsilon) ga[i] -= w * xb[i] / xa[i];
      }
      if (nb.requires_grad) {
        for (std::size_t i = 0; i < an; ++i) gb[i] -= w * clamped_log(xa[i]);
      }
      break;
    }
    case Op::KlDivergence: {
      const double w = g[0] / na.rows;
      const std::size_t an = std::size_t{na.rows} * na.cols;
      if (na.requires_grad) {
        for (std::size_t i = 0; i < an; ++i) {
          const double d = clamped_log(xa[i]) - clamped_log(xb[i]) + (xa[i] > kProbEpsilon ? 1.0 : 0.0);
          ga[i] += w * d;
        }
      }
      if (nb.requires_grad) {
        for (std::size_t i = 0; i < an; ++i)
          if (xb[i] > kProbEpsilon) gb[i] -= w * xa[i] / xb[i];
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

bool needs_grad(const Tape& t, Var v) { return t.node(v.id()).requires_grad; }

std::uint8_t rank_of(const Tape& t, Var v) { return t.node(v.id()).rank; }

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a.rows(), a.cols()) + " vs " +
                     dims(b.rows(), b.cols()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + dims(a.rows(), a.cols()) + " x " +
                     dims(b.rows(), b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  auto id = t.push(Tape::Op::MatMul, a.id(), b.id(), m, p, 2, needs_grad(t, a) || needs_grad(t, b));
  double* y = t.out(id);
  const double* xa = t.in(a.id());
  const double* xb = t.in(b.id());
  for (std::size_t i = 0; i < m; ++i) {
    double* yrow = y + i * p;
    for (std::size_t j = 0; j < k; ++j) {
      const double av = xa[i * k + j];
      if (av == 0.0) continue;
      const double* brow = xb + j * p;
      for (std::size_t c = 0; c < p; ++c) yrow[c] += av * brow[c];
    }
  }
  return {&t, id};
}

namespace {

template <class F>
Var elementwise_binary(Tape::Op op, Var a, Var b, const char* name, F f) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, name);
  auto id = t.push(op, a.id(), b.id(), a.rows(), a.cols(), rank_of(t, a),
                   needs_grad(t, a) || needs_grad(t, b));
  double* y = t.out(id);
  const double* xa = t.in(a.id());
  const double* xb = t.in(b.id());
  for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = f(xa[i], xb[i]);
  return {&t, id};
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary(Tape::Op::Add, a, b, "add", [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return elementwise_binary(Tape::Op::Sub, a, b, "sub", [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return elementwise_binary(Tape::Op::Mul, a, b, "mul", [](double x, double y) { return x * y; });
}

Var add_row(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_row: expected a 1x" + std::to_string(a.cols()) + " row, got " +
                     dims(b.rows(), b.cols()));
  }
  auto id = t.push(Tape::Op::AddRow, a.id(), b.id(), a.rows(), a.cols(), rank_of(t, a),
                   needs_grad(t, a) || needs_grad(t, b));
  double* y = t.out(id);
  const double* xa = t.in(a.id());
  const double* xb = t.in(b.id());
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xa[r * cols + c] + xb[c];
  return {&t, id};
}

Var scale(Var a, double factor) {
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::Scale, a.id(), a.id(), a.rows(), a.cols(), rank_of(t, a), needs_grad(t, a));
  t.mutable_node(id).scalar = factor;
  double* y = t.out(id);
  const double* x = t.in(a.id());
  for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = factor * x[i];
  return {&t, id};
}

Var tanh(Var a) {
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::Tanh, a.id(), a.id(), a.rows(), a.cols(), rank_of(t, a), needs_grad(t, a));
  double* y = t.out(id);
  const double* x = t.in(a.id());
  for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = std::tanh(x[i]);
  return {&t, id};
}

Var sigmoid(Var a) {
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::Sigmoid, a.id(), a.id(), a.rows(), a.cols(), rank_of(t, a), needs_grad(t, a));
  double* y = t.out(id);
  const double* x = t.in(a.id());
  for (std::size_t i = 0, n = a.size(); i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return {&t, id};
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = a.tape();
  if (start + count > a.cols() || count == 0) throw ShapeError("slice_cols: range out of bounds");
  auto id = t.push(Tape::Op::SliceCols, a.id(), a.id(), a.rows(), count, rank_of(t, a), needs_grad(t, a));
  t.mutable_node(id).aux = start;
  double* y = t.out(id);
  const double* x = t.in(a.id());
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(x + r * cols + start, count, y + r * count);
  return {&t, id};
}

Var softmax_temp(Var a, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::SoftmaxRows, a.id(), a.id(), a.rows(), a.cols(), rank_of(t, a), needs_grad(t, a));
  t.mutable_node(id).scalar = temperature;
  double* y = t.out(id);
  const double* x = t.in(a.id());
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (yr[c] = std::exp((xr[c] - mx) / temperature));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= total;
  }
  return {&t, id};
}

Var log_softmax(Var a) {
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::LogSoftmaxRows, a.id(), a.id(), a.rows(), a.cols(), rank_of(t, a),
                   needs_grad(t, a));
  double* y = t.out(id);
  const double* x = t.in(a.id());
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* xr = x + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(xr[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xr[c] - lse;
  }
  return {&t, id};
}

Var sum(Var a) {
  Tape& t = a.tape();
  auto id = t.push(Tape::Op::Sum, a.id(), a.id(), 1, 1, 1, needs_grad(t, a));
  const double* x = t.in(a.id());
  double total = 0.0;
  for (std::size_t i = 0, n = a.size(); i < n; ++i) total += x[i];
  t.out(id)[0] = total;
  return {&t, id};
}

Var pick(Var a, std::size_t index) {
  Tape& t = a.tape();
  if (index >= a.size()) throw ShapeError("pick: index out of range");
  auto id = t.push(Tape::Op::Pick, a.id(), a.id(), 1, 1, 1, needs_grad(t, a));
  t.mutable_node(id).aux = index;
  t.out(id)[0] = t.in(a.id())[index];
  return {&t, id};
}

Var cross_entropy(Var pred, Var target_onehot) {
  Tape& t = same_tape(pred, target_onehot);
  require_same_shape(pred, target_onehot, "cross_entropy");
  auto id = t.push(Tape::Op::CrossEntropy, pred.id(), target_onehot.id(), 1, 1, 1,
                   needs_grad(t, pred) || needs_grad(t, target_onehot));
  const double* p = t.in(pred.id());
  const double* q = t.in(target_onehot.id());
  double total = 0.0;
  for (std::size_t i = 0, n = pred.size(); i < n; ++i)
    if (q[i] != 0.0) total -= q[i] * clamped_log(p[i]);
  t.out(id)[0] = total / static_cast<double>(pred.rows());
  return {&t, id};
}

Var kl_divergence(Var p, Var q) {
  Tape& t = same_tape(p, q);
  require_same_shape(p, q, "kl_divergence");
  auto id = t.push(Tape::Op::KlDivergence, p.id(), q.id(), 1, 1, 1, needs_grad(t, p) || needs_grad(t, q));
  const double* xp = t.in(p.id());
  const double* xq = t.in(q.id());
  double total = 0.0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i)
    if (xp[i] != 0.0) total += xp[i] * (clamped_log(xp[i]) - clamped_log(xq[i]));
  t.out(id)[0] = total / static_cast<double>(p.rows());
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Plain-value helpers

std::vector<double> softmax_temp(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp((logits[i] - mx) / temperature));
  for (double& v : out) v /= total;
  return out;
}

double cross_entropy(std::span<const double> pred, std::span<const double> target_onehot) {
  if (pred.size() != target_onehot.size()) throw ShapeError("cross_entropy: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (target_onehot[i] != 0.0) total -= target_onehot[i] * clamped_log(pred[i]);
  return total;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != 0.0) total += p[i] * (clamped_log(p[i]) - clamped_log(q[i]));
  return total;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradCheckResult grad_check(const ParamFunction& f, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw ParameterError("grad_check eps must be positive");
  std::vector<std::vector<double>> analytic;
  std::vector<bool> saved_flags;
  for (Tensor* p : params) {
    saved_flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  for (Tensor* p : params) {
    if (p->has_grad()) {
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    } else {
      analytic.emplace_back(p->size(), 0.0);
    }
  }

  auto evaluate = [&f]() {
    Tape tape;
    return f(tape).value();
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = evaluate();
      p[i] = saved - eps;
      const double down = evaluate();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[k][i], numeric));
      result.max_abs_analytic = std::max(result.max_abs_analytic, std::abs(analytic[k][i]));
      ++result.checked;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k]->zero_grad();
    params[k]->set_requires_grad(saved_flags[k]);
  }
  return result;
}

GradCheckResult grad_check(const InputFunction& f, const Tensor& x, double eps) {
  Tensor input(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor* params[] = {&input};
  return grad_check([&f, &input](Tape& tape) { return f(tape, tape.param(input)); }, params, eps);
}

}  // namespace pathsearch
