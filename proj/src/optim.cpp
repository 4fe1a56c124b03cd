#include "graspflow/optim.hpp"

#include <cmath>

namespace graspflow {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  require(options_.lr > 0.0, "AdamW: lr must be positive");
  require(options_.beta1 >= 0.0 && options_.beta1 < 1.0 && options_.beta2 >= 0.0 &&
              options_.beta2 < 1.0,
          "AdamW: betas must lie in [0, 1)");
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::set_lr(double lr) {
  require(lr > 0.0, "AdamW: lr must be positive");
  options_.lr = lr;
}

void AdamW::step(const Gradients& grads) {
  std::vector<Matrix> g;
  g.reserve(params_.size());
  for (const Parameter* p : params_) g.push_back(grads.of(*p));
  step(g);
}

void AdamW::step(const std::vector<Matrix>& grads) {
  require(grads.size() == params_.size(), "AdamW: gradient count does not match parameters");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (grads[i].rows() != params_[i]->value.rows() || grads[i].cols() != params_[i]->value.cols())
      throw ContractError("AdamW: gradient shape mismatch for " + params_[i]->name);
    require_finite(grads[i], "gradient of " + params_[i]->name);
  }
  ++step_;
  const auto& o = options_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& p = params_[i]->value;
    p *= 1.0 - o.lr * o.weight_decay;
    m_[i] = o.beta1 * m_[i] + (1.0 - o.beta1) * grads[i];
    v_[i] = o.beta2 * v_[i] + (1.0 - o.beta2) * grads[i].cwiseAbs2();
    p.array() -= o.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + o.eps);
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) g *= f;
  }
  return norm;
}

}  // namespace graspflow
