#include "graspflow/benchmark.hpp"

#include <iomanip>
#include <sstream>

namespace graspflow {

double BenchReport::rate(const std::string& method, double epsilon, const std::string& split) const {
  for (const auto& r : rows)
    if (r.method == method && r.split == split && (r.epsilon < 0.0 || r.epsilon == epsilon)) return r.feasible_rate;
  throw ContractError("benchmark has no row '" + method + "' for split '" + split + "'");
}

std::string BenchReport::csv() const {
  std::ostringstream out;
  out << "method,epsilon,split,top1_feasible_rate,views\n" << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.method << ',';
    if (r.epsilon >= 0.0) out << r.epsilon;
    out << ',' << r.split << ',' << r.feasible_rate << ',' << r.views << '\n';
  }
  return out.str();
}

BenchReport run_benchmark(const LvmModel& model, const Evaluator& evaluator, const Dataset& dataset,
                          const std::vector<Split>& splits, const BenchOptions& options) {
  require(options.n_grasps >= 2, "run_benchmark: need at least two grasps per view");
  require(model.basis.size() == evaluator.basis.size() && model.basis.points == evaluator.basis.points,
          "run_benchmark: model and evaluator were trained with different bases");
  BenchReport report;
  for (Split split : splits) {
    const std::size_t ne = options.epsilons.size();
    double random_pick = 0.0, evaluator_only = 0.0;
    std::vector<double> with_prior(ne, 0.0), with_grasp(ne, 0.0);
    Index views = 0;
    for (std::size_t i = 0; i < dataset.views.size(); ++i) {
      const ViewRecord& v = dataset.views[i];
      if (v.split != split) continue;
      const Observation obs = observe(dataset.clouds[i], model.basis);
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(v.id)));
      const auto samples = model.sample(obs.feature, options.n_grasps, rng);
      std::vector<int> ok(static_cast<std::size_t>(options.n_grasps));
      for (Index k = 0; k < options.n_grasps; ++k) {
        ok[k] = label_grasp(v.shape, to_object_frame(samples.grasps.row(k), obs.frame)).feasible;
        random_pick += ok[k] / static_cast<double>(options.n_grasps);
      }
      const Vector scores = evaluator.evaluate(obs.feature, samples.grasps);
      evaluator_only += ok[rank_and_select(scores, samples.grasp_logp, 1)[0]];
      for (std::size_t e = 0; e < ne; ++e) {
        const double eps = options.epsilons[e];
        with_prior[e] += ok[rank_and_select(fuse(scores, samples.prior_logp, eps), samples.prior_logp, 1)[0]];
        with_grasp[e] += ok[rank_and_select(fuse(scores, samples.grasp_logp, eps), samples.grasp_logp, 1)[0]];
      }
      ++views;
    }
    if (views == 0) continue;
    const std::string name = to_string(split);
    const double n = static_cast<double>(views);
    report.rows.push_back({"w/o evaluator", -1.0, name, random_pick / n, views});
    for (std::size_t e = 0; e < ne; ++e) {
      const double eps = options.epsilons[e];
      report.rows.push_back({"evaluator-only", eps, name, evaluator_only / n, views});
      report.rows.push_back({"evaluator+prior-flow", eps, name, with_prior[e] / n, views});
      report.rows.push_back({"evaluator+grasp-flow", eps, name, with_grasp[e] / n, views});
    }
  }
  return report;
}

bool approaches_seen_side(const RowVector& grasp, const Vec3& view_direction) {
  const Vec3 c0 = grasp.segment<3>(3).transpose();
  const Vec3 c1 = grasp.segment<3>(6).transpose();
  return c0.cross(c1).dot(view_direction) > 0.0;
}

Index ViewIntrospection::wins() const {
  Index w = 0;
  for (const auto& v : views) w += v.seen_logp > v.culled_logp;
  return w;
}

double ViewIntrospection::win_rate() const {
  return views.empty() ? 0.0 : static_cast<double>(wins()) / static_cast<double>(views.size());
}

ViewIntrospection view_introspection(const LvmModel& model, const Dataset& dataset, Split split,
                                     Index max_views, std::uint64_t seed) {
  ViewIntrospection out;
  for (std::size_t i = 0; i < dataset.views.size(); ++i) {
    if (static_cast<Index>(out.views.size()) >= max_views) break;
    const ViewRecord& v = dataset.views[i];
    if (v.split != split) continue;
    Matrix grasps(static_cast<Index>(v.grasps.size()), kGraspDim);
    std::vector<char> seen;
    Index n = 0;
    for (const auto& e : v.grasps) {
      if (!e.feasible) continue;
      grasps.row(n++) = e.canonical;
      seen.push_back(approaches_seen_side(e.canonical, v.view_direction));
    }
    ViewIntrospection::View r;
    r.id = v.id;
    for (char s : seen) (s ? r.seen : r.culled) += 1;
    if (r.seen == 0 || r.culled == 0) continue;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(v.id)));
    const Vector logp = model.grasp_log_likelihood(observe(dataset.clouds[i], model.basis).feature,
                                                   grasps.topRows(n), rng);
    for (Index k = 0; k < n; ++k) (seen[k] ? r.seen_logp : r.culled_logp) += logp(k);
    r.seen_logp /= static_cast<double>(r.seen);
    r.culled_logp /= static_cast<double>(r.culled);
    out.views.push_back(r);
  }
  return out;
}

OodStudy ood_study(const LvmModel& model, const std::vector<ShapeFamily>& known,
                   const std::vector<ShapeFamily>& novel, Index count, const DatasetConfig& config,
                   std::uint64_t seed) {
  require(!known.empty() && !novel.empty() && count >= 1, "ood_study: empty family list or count");
  OodStudy out;
  std::vector<double> in_scores, out_scores;
  for (int group = 0; group < 2; ++group) {
    const auto& families = group == 0 ? known : novel;
    for (Index k = 0; k < count; ++k) {
      const ShapeFamily f = families[static_cast<std::size_t>(k) % families.size()];
      const std::uint64_t s = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(group)), static_cast<std::uint64_t>(k));
      const SceneView view = make_view(f, group == 0 ? Split::heldout : Split::novel, s, config);
      Rng rng(s);
      const double score = model.ood_score(observe(view.partial, model.basis).feature, rng);
      out.clouds.push_back({to_string(f), group == 1, score});
      (group == 0 ? in_scores : out_scores).push_back(score);
    }
  }
  out.auroc = auroc(in_scores, out_scores);
  return out;
}

}  // namespace graspflow
