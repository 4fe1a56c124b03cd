#include <doctest.h>

#include "graspflow/encoding.hpp"
#include "graspflow/mlp.hpp"
#include "graspflow/optim.hpp"
#include "graspflow/tape.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace graspflow;

namespace {

// Plain-loop re-computation of an MLP, independent of Eigen products.
std::vector<double> loop_mlp(const Mlp& mlp, std::vector<double> x) {
  const auto& layers = mlp.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& w = layers[l].weight.value;
    std::vector<double> y(w.cols());
    for (Index o = 0; o < w.cols(); ++o) {
      double acc = layers[l].bias.value(0, o);
      for (Index i = 0; i < w.rows(); ++i) acc += x[i] * w(i, o);
      const bool act = l + 1 < layers.size() || mlp.shape().output_activation;
      if (act)
        acc = mlp.shape().activation == Activation::relu ? std::max(acc, 0.0) : std::tanh(acc);
      y[o] = acc;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST_CASE("mlp_forward: zero weights return the output bias") {
  Rng rng(1);
  Mlp mlp("m", MlpShape{3, 0, {5}, 2, Activation::relu, false}, rng);
  for (auto& l : mlp.layers()) l.weight.value.setZero();
  mlp.layers().back().bias.value << 0.25, -1.5;
  const Vector out = mlp.eval(Vector(Vector::Constant(3, 7.0)));
  CHECK(out(0) == 0.25);
  CHECK(out(1) == -1.5);
}

TEST_CASE("mlp_forward: identity layer with relu output") {
  Rng rng(1);
  Mlp mlp("m", MlpShape{2, 0, {}, 2, Activation::relu, true}, rng);
  mlp.layers()[0].weight.value = Matrix::Identity(2, 2);
  mlp.layers()[0].bias.value.setZero();
  const Vector out = mlp.eval(Vector((Vector(2) << 1.0, -1.0).finished()));
  CHECK(out(0) == 1.0);
  CHECK(out(1) == 0.0);
}

TEST_CASE("mlp_forward: matches loop re-computation for a seeded 2-layer net") {
  Rng rng(42);
  Mlp mlp("m", MlpShape{4, 2, {8}, 3, Activation::relu, false}, rng);
  const Vector x = Vector::Ones(4);
  const Vector c = Vector::Ones(2);
  const Vector out = mlp.eval(x, c);
  const auto ref = loop_mlp(mlp, {1, 1, 1, 1, 1, 1});
  for (int i = 0; i < 3; ++i) CHECK(std::abs(out(i) - ref[i]) < 1e-12);

  // Tape path agrees with the tape-free path.
  Tape tape;
  Var y = mlp.forward(tape, tape.constant(x.transpose()), tape.constant(c.transpose()));
  CHECK((y.value().row(0).transpose() - out).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mlp_forward: dimension mismatch is a contract error") {
  Rng rng(1);
  Mlp mlp("m", MlpShape{3, 2, {4}, 1}, rng);
  CHECK_THROWS_AS(mlp.eval(Vector(Vector::Ones(2)), Vector(Vector::Ones(2))), ContractError);
  CHECK_THROWS_AS(mlp.eval(Vector(Vector::Ones(3))), ContractError);
}

TEST_CASE("backward: linear loss has gradient equal to the input") {
  Parameter w{"w", Matrix::Zero(3, 1)};
  w.value << 0.5, -2.0, 3.0;
  Matrix x(1, 3);
  x << 1.5, 2.5, -4.0;
  Tape tape;
  Var loss = matmul(tape.constant(x), tape.param(w));
  Gradients g = tape.backward(loss);
  CHECK(g.of(w) == x.transpose());
}

TEST_CASE("backward: constant loss gives zero gradients and backward is single-use") {
  Parameter w{"w", Matrix::Ones(2, 2)};
  Parameter unused{"u", Matrix::Ones(1, 4)};
  Tape tape;
  Var pw = tape.param(w);
  Var loss = add(scale(sum(pw), 0.0), tape.constant(Matrix::Constant(1, 1, 3.0)));
  Gradients g = tape.backward(loss);
  CHECK(g.of(w).isZero());
  CHECK(g.of(unused).isZero());
  CHECK(g.of(unused).cols() == 4);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("backward: squared-norm of a random MLP passes the finite-difference check") {
  Rng rng(3);
  Mlp mlp("m", MlpShape{5, 3, {16}, 4, Activation::tanh, false}, rng);
  Matrix x = standard_normal(6, 5, rng);
  Matrix c = standard_normal(6, 3, rng);
  auto loss = [&](Tape& t) {
    return sum(square(mlp.forward(t, t.constant(x), t.constant(c))));
  };
  auto r = testing::gradient_check(mlp.parameters(), loss, 200, 11);
  CHECK(r.checked >= 100);
  CHECK(r.failed == 0);

  Mlp relu_mlp("r", MlpShape{5, 0, {16}, 4, Activation::relu, false}, rng);
  auto relu_loss = [&](Tape& t) { return sum(square(relu_mlp.forward(t, t.constant(x)))); };
  auto rr = testing::gradient_check(relu_mlp.parameters(), relu_loss, 150, 12);
  CHECK(rr.failed == 0);
}

TEST_CASE("backward: broadcasting, slicing and clamp ops pass the finite-difference check") {
  Rng rng(5);
  Parameter a{"a", standard_normal(4, 6, rng)};
  Parameter row{"row", standard_normal(1, 6, rng)};
  Parameter col{"col", standard_normal(4, 1, rng)};
  Parameter s{"s", standard_normal(1, 1, rng)};
  auto loss = [&](Tape& t) {
    Var x = mul(add(t.param(a), t.param(row)), t.param(col));
    x = sub(x, t.param(s));
    Var left = slice_cols(x, 0, 3), right = slice_cols(x, 3, 3);
    Var y = concat_cols(exp(soft_clamp(right, 2.0)), tanh(left));
    return mean(add(add(sum_cols(y), scale(sum_cols(square(relu(x))), 0.3)), sum_cols(softplus(x))));
  };
  auto r = testing::gradient_check({&a, &row, &col, &s}, loss, 100, 13);
  CHECK(r.failed == 0);
}

TEST_CASE("backward: lu_compose matches finite differences") {
  Rng rng(9);
  const Index d = 4;
  Parameter lower{"l", standard_normal(d, d, rng)};
  Parameter upper{"u", standard_normal(d, d, rng)};
  Parameter logd{"d", standard_normal(1, d, rng) * 0.3};
  std::vector<Index> perm{2, 0, 3, 1};
  Vector sign(d);
  sign << 1, -1, 1, -1;
  Matrix x = standard_normal(3, d, rng);
  auto loss = [&](Tape& t) {
    Var w = lu_compose(t.param(lower), t.param(upper), t.param(logd), perm, sign);
    return sum(square(matmul(t.constant(x), w)));
  };
  auto r = testing::gradient_check({&lower, &upper, &logd}, loss, 100, 14);
  CHECK(r.failed == 0);
}

TEST_CASE("softplus is stable for large inputs") {
  Tape t;
  Matrix x(1, 4);
  x << -800.0, 0.0, 1.0, 800.0;
  const Matrix y = softplus(t.constant(x)).value();
  CHECK(y(0, 0) == 0.0);
  CHECK(std::abs(y(0, 1) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(y(0, 2) - std::log1p(std::exp(1.0))) < 1e-15);
  CHECK(y(0, 3) == 800.0);
}

TEST_CASE("ops reject non-finite values with a typed error") {
  Tape tape;
  Matrix bad = Matrix::Constant(1, 1, std::nan(""));
  CHECK_THROWS_AS(tape.constant(bad), NumericError);
  Var big = tape.constant(Matrix::Constant(1, 1, 1000.0));
  CHECK_THROWS_AS(exp(big), NumericError);
  Rng rng(1);
  Mlp mlp("m", MlpShape{1, 0, {2}, 1}, rng);
  CHECK_THROWS_AS(mlp.eval(Vector(Vector::Constant(1, INFINITY))), NumericError);
}

TEST_CASE("adamw_step: zero gradient without decay leaves parameters unchanged") {
  Parameter p{"p", Matrix::Constant(2, 2, 1.5)};
  AdamW opt({&p}, AdamWOptions{1e-2, 0.9, 0.999, 1e-8, 0.0});
  opt.step(std::vector<Matrix>{Matrix::Zero(2, 2)});
  CHECK(p.value == Matrix::Constant(2, 2, 1.5));
  CHECK(opt.steps() == 1);
}

TEST_CASE("adamw_step: first step matches the hand-computed formula") {
  Parameter p{"p", Matrix::Zero(1, 3)};
  p.value << 1.0, -2.0, 0.5;
  Matrix g(1, 3);
  g << 0.3, -4.0, 1e-9;
  const double lr = 1e-3, eps = 1e-8;
  AdamW opt({&p}, AdamWOptions{lr, 0.9, 0.999, eps, 0.0});
  opt.step(std::vector<Matrix>{g});
  // Bias-corrected moments after one step are g and g^2, so the update is g / (|g| + eps).
  const double expected[3] = {1.0 - lr * 0.3 / (0.3 + eps), -2.0 + lr * 4.0 / (4.0 + eps),
                              0.5 - lr * 1e-9 / (1e-9 + eps)};
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p.value(0, i) - expected[i]) < 1e-15);
}

TEST_CASE("adamw_step: decoupled decay shrinks by (1 - lr * wd)") {
  Parameter p{"p", Matrix::Constant(1, 2, 2.0)};
  AdamW opt({&p}, AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step(std::vector<Matrix>{Matrix::Zero(1, 2)});
  CHECK(std::abs(p.value(0, 0) - 2.0 * (1.0 - 0.05)) < 1e-15);
}

TEST_CASE("adamw_step: shape mismatch is rejected") {
  Parameter p{"p", Matrix::Zero(2, 2)};
  AdamW opt({&p});
  CHECK_THROWS_AS(opt.step(std::vector<Matrix>{Matrix::Zero(2, 3)}), ContractError);
  CHECK_THROWS_AS(opt.step(std::vector<Matrix>{}), ContractError);
  CHECK(opt.steps() == 0);
}

TEST_CASE("optimizer trajectories are bit-identical for identical seeds") {
  auto run = [] {
    Rng rng(77);
    Mlp mlp("m", MlpShape{3, 0, {8, 8}, 2}, rng);
    AdamW opt(mlp.parameters(), AdamWOptions{1e-2});
    Matrix x = standard_normal(16, 3, rng);
    for (int it = 0; it < 100; ++it) {
      Tape t;
      Var loss = mean(square(mlp.forward(t, t.constant(x))));
      opt.step(t.backward(loss));
    }
    return mlp.layers()[1].weight.value;
  };
  CHECK(run() == run());
}

TEST_CASE("positional_encode examples") {
  Vector zero = Vector::Zero(1);
  Vector e = positional_encode(zero, 2);
  REQUIRE(e.size() == 5);
  CHECK(e(0) == 0.0);
  CHECK(e(1) == 0.0);
  CHECK(e(2) == 1.0);
  CHECK(e(3) == 0.0);
  CHECK(e(4) == 1.0);

  Vector one = Vector::Ones(1);
  Vector f = positional_encode(one, 1);
  CHECK(f(0) == 1.0);
  CHECK(std::abs(f(1)) < 1e-15);
  CHECK(f(2) == -1.0);

  Vector v(3);
  v << 0.3, -1.2, 4.0;
  CHECK(positional_encode(v, 0) == v);
  CHECK(positional_encode(v, 4).size() == 27);
  CHECK_THROWS_AS(positional_encode(v, -1), ContractError);
}
