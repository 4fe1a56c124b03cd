#pragma once

#include "graspflow/tape.hpp"

#include <cstdint>
#include <vector>

namespace graspflow {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Decay is applied to the parameter before
/// the moment update: p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options = {});

  void step(const Gradients& grads);
  /// Explicit-gradient form; `grads[i]` pairs with the i-th registered parameter.
  void step(const std::vector<Matrix>& grads);

  std::uint64_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  void set_lr(double lr);

  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamWOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

/// Rescale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

}  // namespace graspflow
