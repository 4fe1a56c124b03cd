#pragma once

#include "graspflow/bps.hpp"
#include "graspflow/grasp.hpp"
#include "graspflow/mlp.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace graspflow {

struct EvaluatorConfig {
  Index feature_dim = kDefaultBasisSize;
  Index grasp_dim = kGraspDim;
  Index embed_dim = 32;
  std::vector<Index> embed_hidden{128, 128, 128};
  std::vector<Index> hidden{128, 128};
  int pe_bands = 4;

  void validate() const;
};

nlohmann::json to_json(const EvaluatorConfig& c);
EvaluatorConfig evaluator_config_from_json(const nlohmann::json& j);

/// Discriminative grasp-success classifier on (observation embedding, encoded grasp).
class Evaluator {
 public:
  Evaluator() = default;
  Evaluator(const EvaluatorConfig& config, Rng& rng);

  Var logits(Tape& tape, const Matrix& features, const Matrix& grasps) const;
  Vector logits(const RowVector& feature, const Matrix& grasps) const;
  /// Success probabilities in [0, 1].
  Vector evaluate(const RowVector& feature, const Matrix& grasps) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> state() { return parameters(); }

  EvaluatorConfig config;
  Mlp embedder;
  Mlp head;
  BpsBasis basis;
};

/// Grasps with binary labels, referencing observation rows like GraspSet.
struct LabeledSet {
  Matrix features;
  Matrix grasps;
  std::vector<Index> owner;
  std::vector<int> labels;  // 1 feasible, 0 not

  Index size() const { return grasps.rows(); }
  void validate(Index feature_dim, Index grasp_dim) const;
};

struct EvaluatorTrainConfig {
  double lr = 1e-3;
  Index batch = 128;
  int iterations = 3000;
  double weight_decay = 0.01;
  double holdout_fraction = 0.1;  // of observations, kept out of training
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const EvaluatorTrainConfig& c);
EvaluatorTrainConfig evaluator_train_config_from_json(const nlohmann::json& j);

struct EvaluatorReport {
  std::vector<double> loss;
  double holdout_accuracy = 0.0;
  Index holdout_size = 0;
};

/// Binary cross-entropy training. Throws DataError unless both labels occur.
EvaluatorReport train_evaluator(Evaluator& net, const LabeledSet& data,
                                const EvaluatorTrainConfig& config);

/// Fraction of grasps whose thresholded score (0.5) matches the label.
double accuracy(const Evaluator& net, const LabeledSet& data, const std::vector<Index>& rows);

/// eps * score + (1 - eps) * (logp - mean) / std over the batch. With zero
/// spread the likelihood term is only centered.
Vector fuse(const Vector& scores, const Vector& grasp_logps, double epsilon);

/// Indices of the top `k` grasps by fused score, ties broken by higher
/// log-likelihood and then by lower index.
std::vector<Index> rank_and_select(const Vector& fused, const Vector& grasp_logps, Index k);

/// Probability that a random positive outscores a random negative (ties count half).
double auroc(const std::vector<double>& positives, const std::vector<double>& negatives);

void save_evaluator(const std::string& path, Evaluator& net);
Evaluator load_evaluator(const std::string& path);

}  // namespace graspflow
