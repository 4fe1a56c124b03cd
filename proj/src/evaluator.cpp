#include "graspflow/evaluator.hpp"

#include "graspflow/binary_io.hpp"
#include "graspflow/encoding.hpp"
#include "graspflow/models.hpp"
#include "graspflow/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace graspflow {

void EvaluatorConfig::validate() const {
  require(feature_dim >= 1 && grasp_dim >= 1 && embed_dim >= 1, "EvaluatorConfig: dimensions must be positive");
  require(pe_bands >= 0, "EvaluatorConfig: pe_bands must be non-negative");
}

nlohmann::json to_json(const EvaluatorConfig& c) {
  return {{"feature_dim", c.feature_dim}, {"grasp_dim", c.grasp_dim},       {"embed_dim", c.embed_dim},
          {"embed_hidden", c.embed_hidden}, {"hidden", c.hidden}, {"pe_bands", c.pe_bands}};
}

EvaluatorConfig evaluator_config_from_json(const nlohmann::json& j) {
  EvaluatorConfig c;
  try {
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.grasp_dim = j.value("grasp_dim", c.grasp_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.embed_hidden = j.value("embed_hidden", c.embed_hidden);
    c.hidden = j.value("hidden", c.hidden);
    c.pe_bands = j.value("pe_bands", c.pe_bands);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("evaluator config: ") + e.what());
  }
  c.validate();
  return c;
}

void EvaluatorTrainConfig::validate() const {
  require(lr > 0.0 && batch >= 1 && iterations >= 1, "EvaluatorTrainConfig: lr, batch and iterations must be positive");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "EvaluatorTrainConfig: holdout_fraction must be in [0, 1)");
  require(weight_decay >= 0.0, "EvaluatorTrainConfig: negative weight decay");
}

nlohmann::json to_json(const EvaluatorTrainConfig& c) {
  return {{"lr", c.lr},
          {"batch", c.batch},
          {"iterations", c.iterations},
          {"weight_decay", c.weight_decay},
          {"holdout_fraction", c.holdout_fraction},
          {"seed", c.seed}};
}

EvaluatorTrainConfig evaluator_train_config_from_json(const nlohmann::json& j) {
  EvaluatorTrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.iterations = j.value("iterations", c.iterations);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("evaluator train config: ") + e.what());
  }
  c.validate();
  return c;
}

Evaluator::Evaluator(const EvaluatorConfig& c, Rng& rng) : config(c) {
  c.validate();
  embedder = Mlp("evaluator.embedder",
                 MlpShape{c.feature_dim, 0, c.embed_hidden, c.embed_dim, Activation::relu, false}, rng);
  head = Mlp("evaluator.head",
             MlpShape{c.grasp_dim * (2 * c.pe_bands + 1), c.embed_dim, c.hidden, 1, Activation::relu, false},
             rng);
}

Var Evaluator::logits(Tape& tape, const Matrix& features, const Matrix& grasps) const {
  require(features.rows() == grasps.rows(), "Evaluator: need one feature row per grasp");
  Var e = embedder.forward(tape, tape.constant(features));
  return head.forward(tape, tape.constant(positional_encode(grasps, config.pe_bands)), e);
}

Vector Evaluator::logits(const RowVector& feature, const Matrix& grasps) const {
  const Matrix e = embedder.eval(Matrix(feature));
  return head.eval(positional_encode(grasps, config.pe_bands), e).col(0);
}

Vector Evaluator::evaluate(const RowVector& feature, const Matrix& grasps) const {
  return (1.0 / (1.0 + (-logits(feature, grasps).array()).exp())).matrix();
}

std::vector<Parameter*> Evaluator::parameters() {
  std::vector<Parameter*> out = embedder.parameters();
  append(out, head.parameters());
  return out;
}

void LabeledSet::validate(Index feature_dim, Index grasp_dim) const {
  if (grasps.rows() == 0) throw DataError("labeled set is empty");
  if (features.cols() != feature_dim || grasps.cols() != grasp_dim)
    throw DataError("labeled set widths do not match the evaluator");
  if (static_cast<Index>(owner.size()) != grasps.rows() || static_cast<Index>(labels.size()) != grasps.rows())
    throw DataError("labeled set needs one owner and one label per grasp");
  for (Index o : owner)
    if (o < 0 || o >= features.rows()) throw DataError("grasp references a missing observation");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
    (l ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("evaluator training needs both feasible and infeasible grasps");
}

namespace {

void gather(const LabeledSet& d, const std::vector<Index>& rows, Matrix& f, Matrix& g, Matrix& y) {
  const auto n = static_cast<Index>(rows.size());
  f.resize(n, d.features.cols());
  g.resize(n, d.grasps.cols());
  y.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    f.row(i) = d.features.row(d.owner[rows[i]]);
    g.row(i) = d.grasps.row(rows[i]);
    y(i, 0) = d.labels[rows[i]];
  }
}

}  // namespace

double accuracy(const Evaluator& net, const LabeledSet& data, const std::vector<Index>& rows) {
  if (rows.empty()) return 0.0;
  Matrix f, g, y;
  gather(data, rows, f, g, y);
  Tape tape;
  const Matrix logit = net.logits(tape, f, g).value();
  Index correct = 0;
  for (Index i = 0; i < logit.rows(); ++i) correct += (logit(i, 0) > 0.0) == (y(i, 0) > 0.5);
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

EvaluatorReport train_evaluator(Evaluator& net, const LabeledSet& data, const EvaluatorTrainConfig& cfg) {
  cfg.validate();
  data.validate(net.config.feature_dim, net.config.grasp_dim);
  Rng rng(cfg.seed);

  // Hold out whole observations so no view is seen in both splits.
  std::vector<Index> obs(static_cast<std::size_t>(data.features.rows()));
  std::iota(obs.begin(), obs.end(), Index{0});
  std::shuffle(obs.begin(), obs.end(), rng);
  const auto held = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(obs.size()));
  std::vector<char> is_held(obs.size(), 0);
  for (std::size_t i = 0; i < held; ++i) is_held[obs[i]] = 1;
  std::vector<Index> train, holdout;
  for (Index i = 0; i < data.size(); ++i) (is_held[data.owner[i]] ? holdout : train).push_back(i);
  if (train.empty()) throw DataError("no training grasps left after the holdout split");

  AdamW opt(net.parameters(), AdamWOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  EvaluatorReport report;
  std::vector<Index> rows(static_cast<std::size_t>(cfg.batch));
  for (int it = 0; it < cfg.iterations; ++it) {
    for (auto& r : rows) r = train[pick(rng)];
    Matrix f, g, y;
    gather(data, rows, f, g, y);
    Tape tape;
    Var logit = net.logits(tape, f, g);
    // BCE with logits: softplus(x) - y * x.
    Var loss = mean(sub(softplus(logit), mul(logit, tape.constant(y))));
    report.loss.push_back(loss.value()(0, 0));
    opt.step(tape.backward(loss));
  }
  report.holdout_size = static_cast<Index>(holdout.size());
  report.holdout_accuracy = accuracy(net, data, holdout);
  return report;
}

Vector fuse(const Vector& scores, const Vector& grasp_logps, double epsilon) {
  require(scores.size() == grasp_logps.size(), "fuse: scores and log-likelihoods differ in length");
  require(scores.size() >= 2, "fuse: batch normalization needs at least two grasps");
  require(epsilon >= 0.0 && epsilon <= 1.0, "fuse: epsilon must be in [0, 1]");
  require_finite(scores, "fuse scores");
  require_finite(grasp_logps, "fuse log-likelihoods");
  const double mean = grasp_logps.mean();
  const double sd = std::sqrt((grasp_logps.array() - mean).square().mean());
  Vector z = grasp_logps.array() - mean;
  if (sd > 0.0) z /= sd;
  return epsilon * scores + (1.0 - epsilon) * z;
}

std::vector<Index> rank_and_select(const Vector& fused, const Vector& grasp_logps, Index k) {
  require(fused.size() == grasp_logps.size(), "rank_and_select: length mismatch");
  require(k >= 0 && k <= fused.size(), "rank_and_select: k must be within [0, n]");
  std::vector<Index> order(static_cast<std::size_t>(fused.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (fused(a) != fused(b)) return fused(a) > fused(b);
    if (grasp_logps(a) != grasp_logps(b)) return grasp_logps(a) > grasp_logps(b);
    return a < b;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

double auroc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  require(!positives.empty() && !negatives.empty(), "auroc: both populations must be non-empty");
  std::vector<std::pair<double, int>> all;
  for (double p : positives) all.emplace_back(p, 1);
  for (double n : negatives) all.emplace_back(n, 0);
  std::sort(all.begin(), all.end());
  // Sum of positive ranks with midranks for ties (Mann-Whitney U).
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positives.size()), nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

void save_evaluator(const std::string& path, Evaluator& net) {
  io::write_file(path, serialize_checkpoint("evaluator", to_json(net.config), net.basis, net.state()));
}

Evaluator load_evaluator(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.kind != "evaluator") throw FormatError("checkpoint holds a '" + ckpt.kind + "' model, not 'evaluator'");
  Rng rng(0);
  Evaluator net(evaluator_config_from_json(ckpt.config), rng);
  restore_state(ckpt, net.state());
  net.basis = ckpt.basis;
  return net;
}

}  // namespace graspflow
