#include <doctest.h>

#include "graspflow/evaluator.hpp"
#include "graspflow/models.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

using namespace graspflow;

namespace {

EvaluatorConfig small_config(Index feature_dim = 4, Index grasp_dim = 3) {
  EvaluatorConfig c;
  c.feature_dim = feature_dim;
  c.grasp_dim = grasp_dim;
  c.embed_dim = 4;
  c.embed_hidden = {16};
  c.hidden = {32, 32};
  c.pe_bands = 1;
  return c;
}

// Label = the grasp lies on the positive side of a fixed plane; 40 observations.
LabeledSet separable(Index n, std::uint64_t seed, bool flip = false) {
  Rng rng(seed);
  LabeledSet s;
  s.features = standard_normal(40, 4, rng);
  s.grasps = standard_normal(n, 3, rng);
  for (Index i = 0; i < n; ++i) {
    s.owner.push_back(i % 40);
    const int y = s.grasps(i, 0) + 0.5 * s.grasps(i, 1) > 0.0 ? 1 : 0;
    s.labels.push_back(flip ? 1 - y : y);
  }
  return s;
}

double brute_auroc(const std::vector<double>& p, const std::vector<double>& n) {
  double wins = 0.0;
  for (double a : p)
    for (double b : n) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / static_cast<double>(p.size() * n.size());
}

std::vector<Index> argsort_desc(const Vector& v) {
  std::vector<Index> o(static_cast<std::size_t>(v.size()));
  std::iota(o.begin(), o.end(), Index{0});
  std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return v(a) > v(b); });
  return o;
}

}  // namespace

TEST_CASE("train_evaluator: separable labels, symmetry and score gap") {
  const LabeledSet data = separable(4000, 1);
  EvaluatorTrainConfig tc;
  tc.iterations = 1500;
  tc.seed = 2;
  Rng rng(3);
  Evaluator net(small_config(), rng);
  const auto report = train_evaluator(net, data, tc);
  INFO("holdout accuracy " << report.holdout_accuracy);
  CHECK(report.holdout_size > 0);
  CHECK(report.holdout_accuracy >= 0.95);

  // Positive vs negative mean score on fresh data.
  const LabeledSet fresh = separable(1000, 4);
  double pos = 0.0, neg = 0.0;
  int np = 0, nn = 0;
  for (Index i = 0; i < fresh.size(); ++i) {
    const double s = net.evaluate(fresh.features.row(fresh.owner[i]), fresh.grasps.row(i))(0);
    (fresh.labels[i] ? pos : neg) += s;
    (fresh.labels[i] ? np : nn) += 1;
  }
  CHECK(pos / np - neg / nn >= 0.2);

  Rng rng2(3);
  Evaluator flipped(small_config(), rng2);
  train_evaluator(flipped, separable(4000, 1, true), tc);
  std::vector<Index> all(static_cast<std::size_t>(fresh.size()));
  std::iota(all.begin(), all.end(), Index{0});
  const double acc = accuracy(net, fresh, all);
  const double acc_flipped = accuracy(flipped, fresh, all);
  CHECK(std::abs(acc_flipped - (1.0 - acc)) < 0.05);
}

TEST_CASE("train_evaluator: single-class data is rejected") {
  LabeledSet data = separable(100, 5);
  std::fill(data.labels.begin(), data.labels.end(), 1);
  Rng rng(6);
  Evaluator net(small_config(), rng);
  CHECK_THROWS_AS(train_evaluator(net, data, EvaluatorTrainConfig{}), DataError);
}

TEST_CASE("untrained evaluator is at chance level") {
  // Balanced labels drawn independently of the inputs.
  LabeledSet data = separable(2000, 7);
  for (Index i = 0; i < data.size(); ++i) data.labels[i] = static_cast<int>(i % 2);
  Rng rng(8);
  Evaluator net(small_config(), rng);
  std::vector<double> pos, neg;
  for (Index i = 0; i < data.size(); ++i) {
    const double s = net.evaluate(data.features.row(data.owner[i]), data.grasps.row(i))(0);
    (data.labels[i] ? pos : neg).push_back(s);
  }
  CHECK(std::abs(auroc(pos, neg) - 0.5) <= 0.1);

  // On structured labels a random net is only at chance on average over initializations.
  const LabeledSet structured = separable(1000, 9);
  double mean_auc = 0.0;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    Rng r(100 + seed);
    Evaluator e(small_config(), r);
    std::vector<double> p, n;
    for (Index i = 0; i < structured.size(); ++i) {
      const double s = e.evaluate(structured.features.row(structured.owner[i]), structured.grasps.row(i))(0);
      (structured.labels[i] ? p : n).push_back(s);
    }
    mean_auc += auroc(p, n) / 16.0;
  }
  CHECK(std::abs(mean_auc - 0.5) <= 0.1);
}

TEST_CASE("evaluate: deterministic and invariant to cloud point order") {
  EvaluatorConfig c = small_config(64, kGraspDim);
  Rng rng(9);
  Evaluator net(c, rng);
  const BpsBasis basis = make_basis(64, 0.15, 10);
  ShapeSpec spec;
  spec.dims = {0.04, 0.06, 0.05};
  const PointCloud cloud = sample_shape(spec, 11);
  const RowVector f1 = observe(cloud, basis).feature;
  const RowVector f2 = observe(permute(cloud, 12), basis).feature;
  Matrix g = standard_normal(1, kGraspDim, rng).replicate(2, 1);
  const Vector s1 = net.evaluate(f1, g);
  CHECK(s1(0) == s1(1));
  CHECK(std::abs(net.evaluate(f2, g)(0) - s1(0)) < 1e-12);
  CHECK((s1.array() >= 0.0).all());
  CHECK((s1.array() <= 1.0).all());
}

TEST_CASE("fuse: boundaries, affine invariance and monotonicity") {
  Rng rng(13);
  const Vector scores = (standard_normal(100, 1, rng).array().tanh() * 0.5 + 0.5).matrix();
  const Vector logp = standard_normal(100, 1, rng) * 12.0;

  CHECK(rank_and_select(fuse(scores, logp, 1.0), logp, 100) == argsort_desc(scores));
  CHECK(rank_and_select(fuse(scores, logp, 0.0), logp, 100) == argsort_desc(logp));

  for (double eps : {0.0, 0.01, 0.1, 0.5, 1.0}) {
    const Vector shifted = (3.7 * logp.array() - 250.0).matrix();
    CHECK(rank_and_select(fuse(scores, logp, eps), logp, 100) ==
          rank_and_select(fuse(scores, shifted, eps), shifted, 100));
  }

  const Vector base = fuse(scores, logp, 0.3);
  Vector s2 = scores;
  s2(5) += 0.1;
  CHECK(fuse(s2, logp, 0.3)(5) > base(5));
  Vector l2 = logp;
  l2(5) += 1.0;
  CHECK(fuse(scores, l2, 0.3)(5) > base(5));

  const Vector flat = Vector::Constant(4, -3.0);
  CHECK(fuse(Vector::Zero(4), flat, 0.5).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(fuse(scores, logp.head(50), 0.5), ContractError);
  CHECK_THROWS_AS(fuse(scores.head(1), logp.head(1), 0.5), ContractError);
  CHECK_THROWS_AS(fuse(scores, logp, 1.5), ContractError);
}

TEST_CASE("rank_and_select: total order") {
  const Vector fused = Vector::Constant(5, 1.0);
  Vector logp(5);
  logp << 0.0, 2.0, 2.0, -1.0, 3.0;
  CHECK(rank_and_select(fused, logp, 5) == std::vector<Index>{4, 1, 2, 0, 3});
  CHECK(rank_and_select(fused, logp, 2) == std::vector<Index>{4, 1});
  CHECK(rank_and_select(fused, Vector::Zero(5), 5) == std::vector<Index>{0, 1, 2, 3, 4});

  Rng rng(14);
  const Vector f = standard_normal(30, 1, rng);
  auto order = rank_and_select(f, f, 30);
  std::set<Index> seen(order.begin(), order.end());
  CHECK(seen.size() == 30u);
  CHECK_THROWS_AS(rank_and_select(f, f, 31), ContractError);
}

TEST_CASE("auroc matches pairwise counting") {
  Rng rng(15);
  std::vector<double> p, n;
  for (int i = 0; i < 60; ++i) p.push_back(std::round(uniform(rng, 0.0, 10.0)));
  for (int i = 0; i < 45; ++i) n.push_back(std::round(uniform(rng, -3.0, 7.0)));
  CHECK(std::abs(auroc(p, n) - brute_auroc(p, n)) < 1e-12);
  CHECK(auroc({2.0, 3.0}, {0.0, 1.0}) == 1.0);
  CHECK(auroc({1.0}, {1.0}) == 0.5);
}

TEST_CASE("evaluator checkpoint round trip") {
  Rng rng(16);
  Evaluator net(small_config(), rng);
  const std::string path = (std::filesystem::temp_directory_path() / "graspflow_test_eval.ckpt").string();
  save_evaluator(path, net);
  Evaluator back = load_evaluator(path);
  const auto a = net.state(), b = back.state();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  std::filesystem::remove(path);
}
