#pragma once

#include "graspflow/datasetgen.hpp"
#include "graspflow/evaluator.hpp"
#include "graspflow/models.hpp"

#include <string>
#include <vector>

namespace graspflow {

// Reports built on the geometric oracle: grasp selection, view-level and
// object-level introspection.

struct BenchOptions {
  Index n_grasps = 100;  // samples per view
  std::vector<double> epsilons{0.0, 0.01, 0.1, 0.5, 1.0};
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string method;  // "w/o evaluator", "evaluator-only", "evaluator+prior-flow", "evaluator+grasp-flow"
  double epsilon = -1.0;  // negative when the method has no fusion weight
  std::string split;
  double feasible_rate = 0.0;  // top-1 oracle success; mean over samples for "w/o evaluator"
  Index views = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  /// Feasible rate of one row; epsilon is ignored for "w/o evaluator". Throws ContractError when absent.
  double rate(const std::string& method, double epsilon, const std::string& split) const;
  std::string csv() const;
};

/// Samples `n_grasps` per view of each split from the LVM, labels them with the
/// oracle in the object frame, and scores every selection strategy.
BenchReport run_benchmark(const LvmModel& model, const Evaluator& evaluator, const Dataset& dataset,
                          const std::vector<Split>& splits, const BenchOptions& options);

/// Seen-side versus culled-side likelihood of the dataset's feasible grasps.
struct ViewIntrospection {
  struct View {
    Index id = 0;
    Index seen = 0;
    Index culled = 0;
    double seen_logp = 0.0;    // mean grasp log-likelihood
    double culled_logp = 0.0;
  };
  std::vector<View> views;  // only views with grasps on both sides

  Index wins() const;
  double win_rate() const;
};

ViewIntrospection view_introspection(const LvmModel& model, const Dataset& dataset, Split split,
                                     Index max_views, std::uint64_t seed);

/// Grasp approaches the camera-facing side when its approach axis points along the view direction.
bool approaches_seen_side(const RowVector& grasp, const Vec3& view_direction);

struct OodStudy {
  struct Cloud {
    std::string family;
    bool novel = false;
    double score = 0.0;
  };
  std::vector<Cloud> clouds;
  double auroc = 0.0;  // in-distribution scored above novel
};

/// ood_score on `count` fresh views of each group; in-distribution views use
/// the training size ranges.
OodStudy ood_study(const LvmModel& model, const std::vector<ShapeFamily>& known,
                   const std::vector<ShapeFamily>& novel, Index count, const DatasetConfig& config,
                   std::uint64_t seed);

}  // namespace graspflow
