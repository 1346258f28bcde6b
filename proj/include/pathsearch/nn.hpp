#pragma once

#include <cstddef>
#include <vector>

#include "pathsearch/autodiff.hpp"
#include "pathsearch/rng.hpp"

namespace pathsearch {

/// Weights drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

/// Dense layer whose weights have been recorded on a tape.
struct BoundDense {
  Var weight;
  Var bias;
  Var operator()(Var x) const { return add_row(matmul(x, weight), bias); }
};

/// Fully connected map x [m x in] -> x W + b [m x out].
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng);
  static Dense zeros(std::size_t in, std::size_t out);

  BoundDense bind(Tape& tape) { return {tape.bind(weight_), tape.bind(bias_)}; }
  BoundDense bind(Tape& tape) const { return {tape.bind(weight_), tape.bind(bias_)}; }
  Var forward(Tape& tape, Var x) { return bind(tape)(x); }
  Var forward(Tape& tape, Var x) const { return bind(tape)(x); }

  std::size_t in_dim() const { return weight_.rows(); }
  std::size_t out_dim() const { return weight_.cols(); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

struct LstmState {
  Var h;
  Var c;
};

/// LSTM cell recorded on a tape. Gate order is (input, forget, candidate,
/// output); the cell is composed from elementwise ops.
struct BoundLstm {
  Var input_weight;
  Var hidden_weight;
  Var bias;
  std::size_t hidden = 0;

  LstmState operator()(Var x, LstmState prev) const {
    Var gates = add_row(matmul(x, input_weight) + matmul(prev.h, hidden_weight), bias);
    Var i = sigmoid(slice_cols(gates, 0, hidden));
    Var f = sigmoid(slice_cols(gates, hidden, hidden));
    Var g = tanh(slice_cols(gates, 2 * hidden, hidden));
    Var o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    Var c = f * prev.c + i * g;
    Var h = o * tanh(c);
    return {h, c};
  }
};

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input, std::size_t hidden, Rng& rng);
  static LstmCell zeros(std::size_t input, std::size_t hidden);

  BoundLstm bind(Tape& tape) {
    return {tape.bind(input_weight_), tape.bind(hidden_weight_), tape.bind(bias_), hidden_dim()};
  }
  BoundLstm bind(Tape& tape) const {
    return {tape.bind(input_weight_), tape.bind(hidden_weight_), tape.bind(bias_), hidden_dim()};
  }

  std::size_t input_dim() const { return input_weight_.rows(); }
  std::size_t hidden_dim() const { return hidden_weight_.rows(); }

  Tensor& input_weight() { return input_weight_; }
  Tensor& hidden_weight() { return hidden_weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& input_weight() const { return input_weight_; }
  const Tensor& hidden_weight() const { return hidden_weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor input_weight_;
  Tensor hidden_weight_;
  Tensor bias_;
};

void zero_grads(const std::vector<Tensor*>& params);

/// params += step * grad (step < 0 for descent).
void apply_gradient(const std::vector<Tensor*>& params, double step);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One descent step using the accumulated grads; grads are left untouched.
  void step(const std::vector<Tensor*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace pathsearch
