#include "pathsearch/nn.hpp"

#include <cmath>

namespace pathsearch {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape), true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng)
    : weight_(uniform_init({in, out}, in, rng)), bias_(uniform_init({1, out}, in, rng)) {}

Dense Dense::zeros(std::size_t in, std::size_t out) {
  Dense d;
  d.weight_ = Tensor({in, out}, true);
  d.bias_ = Tensor({1, out}, true);
  return d;
}

LstmCell::LstmCell(std::size_t input, std::size_t hidden, Rng& rng)
    : input_weight_(uniform_init({input, 4 * hidden}, hidden, rng)),
      hidden_weight_(uniform_init({hidden, 4 * hidden}, hidden, rng)),
      bias_(uniform_init({1, 4 * hidden}, hidden, rng)) {}

LstmCell LstmCell::zeros(std::size_t input, std::size_t hidden) {
  LstmCell cell;
  cell.input_weight_ = Tensor({input, 4 * hidden}, true);
  cell.hidden_weight_ = Tensor({hidden, 4 * hidden}, true);
  cell.bias_ = Tensor({1, 4 * hidden}, true);
  return cell;
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

void apply_gradient(const std::vector<Tensor*>& params, double step) {
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    auto g = p->grad();
    auto d = p->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += step * g[i];
  }
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Tensor*>& params) {
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      d[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

}  // namespace pathsearch
