#include <doctest.h>

#include "graspflow/flows.hpp"
#include "graspflow/optim.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace graspflow;

namespace {

FlowConfig small_config(Index dim, Index ctx, int blocks, BaseKind base = BaseKind::standard_normal) {
  FlowConfig c;
  c.dim = dim;
  c.context_dim = ctx;
  c.blocks = blocks;
  c.conditioner_hidden = {16, 16, 16};
  c.base = base;
  c.base_hidden = {16};
  return c;
}

// Identity-initialized stack with every parameter moved off its init.
FlowStack random_stack(Index dim, Index ctx, int blocks, std::uint64_t seed,
                       BaseKind base = BaseKind::standard_normal) {
  Rng rng(seed);
  FlowStack s("f", small_config(dim, ctx, blocks, base), FlowInit::identity, rng);
  testing::perturb(s.parameters(), seed + 1, 0.1);
  return s;
}

// log|det| of the generate-direction Jacobian assembled by central differences.
double fd_logdet(const FlowStack& s, const Vector& u, const Vector& ctx, double h) {
  const Index d = u.size();
  Matrix jac(d, d);
  for (Index j = 0; j < d; ++j) {
    Matrix up = u.transpose(), dn = u.transpose();
    up(0, j) += h;
    dn(0, j) -= h;
    jac.col(j) = (s.forward(up, ctx.transpose()).value - s.forward(dn, ctx.transpose()).value)
                     .row(0)
                     .transpose() /
                 (2.0 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace

TEST_CASE("flow_forward: identity initialization is the identity map") {
  Rng rng(1);
  FlowStack s("f", small_config(5, 3, 4), FlowInit::identity, rng);
  Matrix u = standard_normal(7, 5, rng);
  auto out = s.forward(u, standard_normal(7, 3, rng));
  CHECK((out.value - u).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.logdet.cwiseAbs().maxCoeff() == 0.0);
  auto inv = s.inverse(u, standard_normal(1, 3, rng));
  CHECK((inv.value - u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flow_forward: single actnorm log-det is the sum of log scales") {
  ActNorm a("a", 3);
  a.set_identity();
  a.log_scale.value << std::log(2.0), std::log(0.5), std::log(3.0);
  Vector logdet = Vector::Zero(2);
  Matrix u = Matrix::Ones(2, 3);
  Matrix x = a.generate(u, logdet);
  CHECK(std::abs(logdet(0) - std::log(3.0)) < 1e-15);
  CHECK(std::abs(x(0, 0) - 2.0) < 1e-15);
}

TEST_CASE("flow_forward: log-det matches the finite-difference Jacobian (8 blocks, d = 6)") {
  FlowStack s = random_stack(6, 3, 8, 21);
  Rng rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    Vector u = standard_normal(6, 1, rng);
    Vector c = standard_normal(3, 1, rng);
    const double analytic = s.forward(u.transpose(), c.transpose()).logdet(0);
    CHECK(std::abs(analytic - fd_logdet(s, u, c, 1e-6)) < 1e-5);
  }
}

TEST_CASE("flow_inverse: round trip and log-det cancellation on 1000 random pairs") {
  FlowStack s = random_stack(6, 4, 8, 31, BaseKind::conditional_normal);
  Rng rng(32);
  Matrix u = standard_normal(1000, 6, rng) * 1.5;
  Matrix c = standard_normal(1000, 4, rng);
  auto fwd = s.forward(u, c);
  auto inv = s.inverse(fwd.value, c);
  CHECK((inv.value - u).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((inv.logdet + fwd.logdet).cwiseAbs().maxCoeff() < 1e-9);

  // Inverse first, then forward.
  Matrix x = standard_normal(200, 6, rng);
  auto back = s.forward(s.inverse(x, c.topRows(200)).value, c.topRows(200));
  CHECK((back.value - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("flow log-det is additive over layers") {
  FlowStack s = random_stack(5, 2, 3, 41);
  Rng rng(42);
  Matrix u = standard_normal(10, 5, rng);
  Matrix c = standard_normal(10, 2, rng);
  Vector total = Vector::Zero(10);
  Matrix h = u;
  for (auto it = s.layers().rbegin(); it != s.layers().rend(); ++it) {
    Vector ld = Vector::Zero(10);
    h = generate_layer(*it, h, c, ld);
    total += ld;
  }
  auto fwd = s.forward(u, c);
  CHECK((fwd.value - h).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fwd.logdet - total).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flow_log_prob: identity stack gives the standard-normal density") {
  Rng rng(1);
  FlowStack s("f", small_config(24, 0, 2), FlowInit::identity, rng);
  const double lp0 = s.log_prob(Matrix::Zero(1, 24), Matrix(1, 0))(0);
  CHECK(std::abs(lp0 - (-12.0 * std::log(2.0 * std::numbers::pi))) < 1e-12);
  CHECK(std::abs(lp0 - (-22.05452)) < 1e-4);

  Matrix x = standard_normal(5, 24, rng);
  Vector lp = s.log_prob(x, Matrix(1, 0));
  for (Index i = 0; i < 5; ++i)
    CHECK(std::abs(lp(i) - (-12.0 * std::log(2.0 * std::numbers::pi) - 0.5 * x.row(i).squaredNorm())) <
          1e-12);
}

TEST_CASE("flow_sample: sampled log-probs agree with independent scoring") {
  FlowStack s = random_stack(6, 3, 8, 51, BaseKind::conditional_normal);
  Rng rng(52);
  Matrix c = standard_normal(1000, 3, rng);
  auto samples = s.sample(c, 1000, rng);
  Vector scored = s.log_prob(samples.x, c);
  CHECK((scored - samples.log_prob).cwiseAbs().maxCoeff() < 1e-8);

  Rng a(5), b(5);
  CHECK(s.sample(c.row(0), 20, a).x == s.sample(c.row(0), 20, b).x);
  CHECK_THROWS_AS(s.sample(c.row(0), 0, a), ContractError);
}

TEST_CASE("flow_sample: identity stack yields base draws") {
  Rng rng(3);
  FlowStack s("f", small_config(4, 0, 2), FlowInit::identity, rng);
  const Index n = 4000;
  auto samples = s.sample(Matrix(1, 0), n, rng);
  CHECK(samples.x == samples.base);
  CHECK(samples.x.colwise().mean().cwiseAbs().maxCoeff() < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("actnorm_init: statistics, degenerate batches, and the uninitialized guard") {
  Rng rng(61);
  FlowStack s("f", small_config(4, 2, 3), FlowInit::random, rng);
  CHECK_FALSE(s.initialized());
  CHECK_THROWS_AS(s.forward(Matrix::Zero(2, 4), Matrix::Zero(2, 2)), ContractError);
  CHECK_THROWS_AS(s.log_prob(Matrix::Zero(2, 4), Matrix::Zero(2, 2)), ContractError);
  CHECK_THROWS_AS(s.initialize_actnorm(Matrix::Zero(8, 4), Matrix::Zero(8, 2)), ContractError);
  CHECK_THROWS_AS(s.initialize_actnorm(Matrix::Constant(32, 4, 1.0), Matrix::Zero(32, 2)), DataError);

  Matrix x = (standard_normal(256, 4, rng).array() + 5.0).matrix();
  x.col(1) *= 3.0;
  Matrix c = standard_normal(256, 2, rng);
  s.initialize_actnorm(x, c);
  CHECK(s.initialized());

  // Replay the normalize direction and check each actnorm's output moments.
  Matrix h = x;
  for (const auto& layer : s.layers()) {
    Tape t;
    Var ld = t.constant(Matrix::Zero(h.rows(), 1));
    Var in = t.constant(h);
    if (const auto* a = std::get_if<ActNorm>(&layer)) {
      h = a->normalize(t, in, ld).value();
      const RowVector mean = h.colwise().mean();
      const RowVector var = (h.rowwise() - mean).array().square().colwise().mean();
      CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
      CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-6);
    } else if (const auto* l = std::get_if<InvLinear>(&layer)) {
      h = l->normalize(t, in, ld).value();
    } else {
      h = std::get<Coupling>(layer).normalize(t, in, t.constant(c), ld).value();
    }
  }

  // Standard-normal data through an identity-linear stack gives scale ~1, shift ~0.
  Rng r2(62);
  FlowStack plain("p", small_config(3, 0, 1), FlowInit::random, r2);
  std::get<InvLinear>(plain.layers()[1]).set_identity();
  plain.initialize_actnorm(standard_normal(20000, 3, r2), Matrix(1, 0));
  const auto& an = std::get<ActNorm>(plain.layers()[0]);
  CHECK(an.log_scale.value.cwiseAbs().maxCoeff() < 0.03);
  CHECK(an.shift.value.cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("InvLinear: LU reconstruction and determinant") {
  Rng rng(71);
  InvLinear lin("l", 5);
  lin.randomize(rng);
  const Matrix w = lin.weight();
  // Random rotation: orthogonal with |det| = 1.
  CHECK((w.transpose() * w - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(lin.log_abs_det()) < 1e-12);
  testing::perturb(lin.parameters(), 72, 0.3);
  CHECK(std::abs(std::log(std::abs(lin.weight().determinant())) - lin.log_abs_det()) < 1e-12);
}

TEST_CASE("coupling log-scales stay within the clamp and masks alternate") {
  FlowStack s = random_stack(7, 2, 8, 81);
  std::vector<int> transformed(7, 0);
  bool prev_swap = true;
  for (const auto& layer : s.layers()) {
    if (const auto* c = std::get_if<Coupling>(&layer)) {
      const bool swap = c->transformed_start() == 0;
      CHECK(swap != prev_swap);
      prev_swap = swap;
      for (Index i = 0; i < c->transformed_size(); ++i) ++transformed[c->transformed_start() + i];
    }
  }
  for (int n : transformed) CHECK(n >= 4);

  // Huge conditioner outputs are clamped: |log-det| <= clamp * transformed size.
  Rng rng(82);
  Coupling c("c", 4, 0, false, {8}, 5.0, rng);
  c.conditioner.layers().back().bias.value.setConstant(1e3);
  Vector ld = Vector::Zero(1);
  c.generate(Matrix::Ones(1, 4), Matrix(1, 0), ld);
  CHECK(std::abs(ld(0)) <= 5.0 * 2 + 1e-12);
}

TEST_CASE("flow_log_prob parameter gradients pass the finite-difference check") {
  FlowStack s = random_stack(4, 2, 3, 91, BaseKind::conditional_normal);
  Rng rng(92);
  Matrix x = standard_normal(8, 4, rng);
  Matrix c = standard_normal(8, 2, rng);
  auto loss = [&](Tape& t) { return mean(s.log_prob(t, t.constant(x), t.constant(c))); };
  auto r = testing::gradient_check(s.parameters(), loss, 300, 93, 1e-6);
  INFO("worst relative error " << r.worst_rel);
  CHECK(r.checked >= 100);
  CHECK(r.failed == 0);
}

TEST_CASE("trained 2-D conditional flow integrates to one") {
  Rng rng(101);
  FlowConfig cfg = small_config(2, 1, 4, BaseKind::conditional_normal);
  cfg.conditioner_hidden = {32, 32, 32};
  FlowStack s("toy", cfg, FlowInit::random, rng);
  // Context selects a rotated, banana-bent Gaussian.
  auto draw = [&](Index n, Matrix& x, Matrix& c) {
    x.resize(n, 2);
    c.resize(n, 1);
    for (Index i = 0; i < n; ++i) {
      const double ctx = static_cast<double>(i % 3) - 1.0;
      const double a = std::normal_distribution<double>()(rng);
      const double b = std::normal_distribution<double>()(rng) * 0.5;
      x(i, 0) = a + ctx;
      x(i, 1) = b + 0.4 * a * a - 1.0 + ctx;
      c(i, 0) = ctx;
    }
  };
  Matrix x, c;
  draw(256, x, c);
  s.initialize_actnorm(x, c);
  AdamW opt(s.parameters(), AdamWOptions{3e-3});
  for (int it = 0; it < 300; ++it) {
    draw(128, x, c);
    Tape t;
    opt.step(t.backward(-mean(s.log_prob(t, t.constant(x), t.constant(c)))));
  }
  const int n = 400;
  const double lo = -6.0, hi = 6.0, step = (hi - lo) / (n - 1);
  Matrix grid(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grid.row(i * n + j) << lo + i * step, lo + j * step;
  for (double ctx : {-1.0, 0.0, 1.0}) {
    const Vector p = s.log_prob(grid, Matrix::Constant(1, 1, ctx)).array().exp();
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        total += wi * wj * p(i * n + j);
      }
    total *= step * step;
    CHECK(std::abs(total - 1.0) < 0.01);
  }
}
