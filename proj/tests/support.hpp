#pragma once

#include "graspflow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace graspflow::testing {

struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0.0;
};

/// Central-difference check of d loss / d params on up to `max_coords` random
/// coordinates. `loss_on_tape` must record the loss on the given tape.
inline GradCheckResult gradient_check(const std::vector<Parameter*>& params,
                                      const std::function<Var(Tape&)>& loss_on_tape,
                                      int max_coords, std::uint64_t seed, double h = 1e-5,
                                      double rel_tol = 1e-4, double abs_floor = 1e-7) {
  Gradients grads;
  {
    Tape tape;
    grads = tape.backward(loss_on_tape(tape));
  }
  auto eval = [&] {
    Tape tape;
    return loss_on_tape(tape).value()(0, 0);
  };

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Index i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (static_cast<int>(coords.size()) > max_coords) coords.resize(max_coords);

  GradCheckResult r;
  for (auto [p, i] : coords) {
    double& x = params[p]->value.data()[i];
    const double saved = x;
    x = saved + h;
    const double up = eval();
    x = saved - h;
    const double down = eval();
    x = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = grads.of(*params[p]).data()[i];
    const double err = std::abs(fd - an);
    const double scale = std::max(std::abs(fd), std::abs(an));
    ++r.checked;
    if (err > rel_tol * scale + abs_floor) ++r.failed;
    if (scale > abs_floor) r.worst_rel = std::max(r.worst_rel, err / scale);
  }
  return r;
}

/// Add N(0, sigma) noise to every parameter (used to move layers off their identity init).
inline void perturb(const std::vector<Parameter*>& params, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (Parameter* p : params)
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += n(rng);
}

}  // namespace graspflow::testing
