#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// tensors of rank <= 2. A Tape is rebuilt for every forward pass; Var is a
// cheap handle to a node recorded on it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pathsearch/errors.hpp"

namespace pathsearch {

using Shape = std::vector<std::size_t>;

/// Clamp applied to probabilities before taking a logarithm.
inline constexpr double kProbEpsilon = 1e-12;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag);

  // Absent until the first backward pass reaches this tensor.
  bool has_grad() const { return !grad_.empty(); }
  std::span<const double> grad() const { return grad_; }
  std::span<double> grad() { return grad_; }
  void zero_grad();
  void accumulate_grad(std::span<const double> delta);

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  Shape shape() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  std::span<const double> data() const;
  double value() const;  // scalar nodes only
  double operator[](std::size_t i) const { return data()[i]; }
  Tensor to_tensor() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    Constant,
    Param,
    MatMul,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    Tanh,
    Sigmoid,
    SliceCols,
    SoftmaxRows,
    LogSoftmaxRows,
    Sum,
    Pick,
    CrossEntropy,
    KlDivergence,
  };

  struct Node {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    std::uint32_t rows;
    std::uint32_t cols;
    std::uint8_t rank;
    bool requires_grad;
    std::size_t offset;
    double scalar;
    std::size_t aux;
    Tensor* param;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(const Tensor& t);
  Var constant(std::span<const double> values, Shape shape);
  Var param(Tensor& t);

  // Trainable tensors record as parameters, frozen ones as constants.
  Var bind(Tensor& t) { return param(t); }
  Var bind(const Tensor& t) { return constant(t); }

  /// Propagates d(loss)/d(node) to every recorded node and accumulates the
  /// result into the grad of each bound parameter. A tape can be
  /// backpropagated once; a second call throws ContractError.
  void backward(Var loss);

  /// Gradient of the last backward pass with respect to a recorded node.
  std::span<const double> grad(Var v) const;

  void clear();
  std::size_t node_count() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  std::span<const double> values(std::uint32_t id) const;

  // Low-level recording interface used by the operations below.
  std::uint32_t push(Op op, std::uint32_t a, std::uint32_t b, std::size_t rows, std::size_t cols,
                     std::uint8_t rank, bool requires_grad);
  Node& mutable_node(std::uint32_t id) { return nodes_[id]; }
  double* out(std::uint32_t id) { return values_.data() + nodes_[id].offset; }
  const double* in(std::uint32_t id) const { return values_.data() + nodes_[id].offset; }

 private:
  void backprop_node(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  bool backward_done_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a [m x n] plus a row vector b [1 x n] broadcast over rows.
Var add_row(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Row-wise softmax(a / temperature).
Var softmax_temp(Var a, double temperature);
inline Var softmax(Var a) { return softmax_temp(a, 1.0); }
Var log_softmax(Var a);
Var sum(Var a);
/// Scalar holding element `index` of a (row-major).
Var pick(Var a, std::size_t index);
/// Mean over rows of -sum(target * log(max(pred, eps))).
Var cross_entropy(Var pred, Var target_onehot);
/// Mean over rows of sum(p * (log p - log q)), both clamped at eps.
Var kl_divergence(Var p, Var q);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Plain-value counterparts used outside of recorded graphs.
std::vector<double> softmax_temp(std::span<const double> logits, double temperature);
double cross_entropy(std::span<const double> pred, std::span<const double> target_onehot);
double kl_divergence(std::span<const double> p, std::span<const double> q);

using ParamFunction = std::function<Var(Tape&)>;
using InputFunction = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t checked = 0;
};

/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares backpropagated gradients of `f` with respect to `params` against
/// central differences. `f` must bind each parameter with Tape::param.
GradCheckResult grad_check(const ParamFunction& f, std::span<Tensor* const> params, double eps);

/// Same check for a function of a single input tensor.
GradCheckResult grad_check(const InputFunction& f, const Tensor& x, double eps);

}  // namespace pathsearch
