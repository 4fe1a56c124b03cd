// Command-line entry point: dataset generation, training, sampling, scoring,
// OOD analysis and benchmark reports.

#include "graspflow/benchmark.hpp"
#include "graspflow/binary_io.hpp"
#include "graspflow/datasetgen.hpp"
#include "graspflow/evaluator.hpp"
#include "graspflow/models.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace graspflow;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream s;
  s << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string toml_value(const json& v) {
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_value(v[i]);
    return out + "]";
  }
  return v.dump();  // strings come out quoted and escaped, numbers in round-trip form
}

// Every output directory gets the resolved options as a config file that can
// be passed back with --config, and a separate metadata.json for volatile facts.
class RunDir {
 public:
  RunDir(const std::string& dir, const std::string& command, const json& resolved, int argc, char** argv)
      : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    std::string toml = "[" + command + "]\n";
    for (const auto& [key, value] : resolved.items())
      if (!value.is_null()) toml += key + " = " + toml_value(value) + "\n";
    io::write_file(path("config.toml"), toml);
    meta_["command"] = command;
    for (int i = 0; i < argc; ++i) meta_["argv"].push_back(argv[i]);
    meta_["started"] = timestamp();
  }
  ~RunDir() {
    try {
      meta_["finished"] = timestamp();
      io::write_file(path("metadata.json"), meta_.dump(2) + "\n");
    } catch (...) {
    }
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  fs::path dir_;
  json meta_;
};

std::vector<ShapeFamily> parse_families(const std::vector<std::string>& names) {
  std::vector<ShapeFamily> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_family(n));
    } catch (const DataError& e) {
      throw ContractError(e.what());
    }
  }
  return out;
}

std::vector<Split> parse_splits(const std::vector<std::string>& names) {
  std::vector<Split> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_split(n));
    } catch (const DataError& e) {
      throw ContractError(e.what());
    }
  }
  return out;
}

std::string grasp_header() {
  std::string h = "tx,ty,tz,r00,r10,r20,r01,r11,r21";
  for (int j = 0; j < kJointCount; ++j) h += ",j" + std::to_string(j);
  return h;
}

void write_row(std::ostream& out, const RowVector& g) {
  for (Index c = 0; c < g.size(); ++c) out << (c ? "," : "") << g(c);
}

// ---------------------------------------------------------------- dataset

struct DatasetArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> families{"box", "cylinder"};
  std::vector<std::string> novel_families{"lshape", "capsule"};
  DatasetConfig config;
};

void add_dataset(CLI::App& app, DatasetArgs& a) {
  auto* sub = app.add_subcommand("dataset", "Generate a synthetic grasp dataset");
  sub->fallthrough();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--seed", a.seed, "Dataset seed")->capture_default_str();
  sub->add_option("--families", a.families, "Training families")->capture_default_str();
  sub->add_option("--novel-families", a.novel_families, "Novel families")->capture_default_str();
  sub->add_option("--train-objects", a.config.train_objects)->capture_default_str();
  sub->add_option("--heldout-objects", a.config.heldout_objects)->capture_default_str();
  sub->add_option("--similar-objects", a.config.similar_objects)->capture_default_str();
  sub->add_option("--novel-objects", a.config.novel_objects)->capture_default_str();
  sub->add_option("--views", a.config.views_per_object, "Views per object")->capture_default_str();
  sub->add_option("--heuristic-grasps", a.config.heuristic_grasps)->capture_default_str();
  sub->add_option("--jitter-grasps", a.config.jitter_grasps)->capture_default_str();
  sub->add_option("--free-grasps", a.config.free_grasps)->capture_default_str();
  sub->add_option("--cloud-points", a.config.cloud_points)->capture_default_str();
}

int cmd_dataset(DatasetArgs& a, int argc, char** argv) {
  a.config.seed = a.seed;
  a.config.train_families = parse_families(a.families);
  a.config.novel_families = parse_families(a.novel_families);
  const DatasetConfig& c = a.config;
  RunDir run(a.out, "dataset",
             {{"out", a.out}, {"seed", a.seed}, {"families", a.families}, {"novel-families", a.novel_families},
              {"train-objects", c.train_objects}, {"heldout-objects", c.heldout_objects},
              {"similar-objects", c.similar_objects}, {"novel-objects", c.novel_objects},
              {"views", c.views_per_object}, {"heuristic-grasps", c.heuristic_grasps},
              {"jitter-grasps", c.jitter_grasps}, {"free-grasps", c.free_grasps}, {"cloud-points", c.cloud_points}},
             argc, argv);
  const Dataset d = build_dataset(a.config);
  save_dataset(a.out, d);
  std::cerr << "wrote " << d.views.size() << " views, positive rate "
            << d.manifest.at("positive_rate").get<double>() << "\n";
  return kOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string preset = "lvm";
  std::uint64_t seed = 0;
  std::optional<int> iterations;
  std::optional<double> lr;
  std::optional<Index> batch;
  Index basis_size = kDefaultBasisSize;
  std::uint64_t basis_seed = 0;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train a grasp sampler or the evaluator");
  sub->fallthrough();
  sub->add_option("--dataset", a.dataset, "Dataset directory")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--preset", a.preset, "Model variant")
      ->check(CLI::IsMember({"lvm", "lvm-light", "cnf", "cvae", "evaluator"}))
      ->capture_default_str();
  sub->add_option("--seed", a.seed, "Initialization and batching seed")->capture_default_str();
  sub->add_option("--iterations", a.iterations, "Training iterations (preset default when omitted)");
  sub->add_option("--lr", a.lr, "Learning rate (preset default when omitted)");
  sub->add_option("--batch", a.batch, "Mini-batch size (preset default when omitted)");
  sub->add_option("--basis-size", a.basis_size, "Number of BPS anchor points")->capture_default_str();
  sub->add_option("--basis-seed", a.basis_seed, "Seed of the BPS anchor points")->capture_default_str();
}

void write_loss_csv(const std::string& path, const TrainLog& log) {
  std::ostringstream out;
  out << std::setprecision(10) << "iteration,loss,recon,kld,beta\n";
  for (std::size_t i = 0; i < log.loss.size(); ++i) {
    out << i << ',' << log.loss[i] << ',';
    if (i < log.recon.size()) out << log.recon[i];
    out << ',';
    if (i < log.kld.size()) out << log.kld[i];
    out << ',';
    if (i < log.beta.size()) out << log.beta[i];
    out << '\n';
  }
  io::write_file(path, out.str());
}

int cmd_train(TrainArgs& a, int argc, char** argv) {
  const Dataset d = load_dataset(a.dataset);
  const bool evaluator = a.preset == "evaluator";
  // Unset flags fall back to the preset's training defaults.
  EvaluatorTrainConfig etc;
  TrainConfig tc;
  etc.seed = tc.seed = a.seed;
  if (!a.iterations) a.iterations = evaluator ? etc.iterations : tc.iterations;
  if (!a.lr) a.lr = evaluator ? etc.lr : tc.lr;
  if (!a.batch) a.batch = evaluator ? etc.batch : tc.batch;
  etc.iterations = tc.iterations = *a.iterations;
  etc.lr = tc.lr = *a.lr;
  etc.batch = tc.batch = *a.batch;
  RunDir run(a.out, "train",
             {{"dataset", a.dataset}, {"out", a.out}, {"preset", a.preset}, {"seed", a.seed},
              {"iterations", *a.iterations}, {"lr", *a.lr}, {"batch", *a.batch},
              {"basis-size", a.basis_size}, {"basis-seed", a.basis_seed}},
             argc, argv);
  const BpsBasis basis = make_basis(a.basis_size, d.config.frame_radius, a.basis_seed);
  Rng rng(a.seed);

  if (evaluator) {
    EvaluatorConfig ec;
    ec.feature_dim = basis.size();
    Evaluator net(ec, rng);
    net.basis = basis;
    const EvaluatorReport report = train_evaluator(net, labeled_set(d, basis, {Split::train}), etc);
    save_evaluator(run.path("model.ckpt"), net);
    TrainLog log;
    log.loss = report.loss;
    write_loss_csv(run.path("loss.csv"), log);
    io::write_file(run.path("report.json"),
                   json{{"holdout_accuracy", report.holdout_accuracy}, {"holdout_size", report.holdout_size}}.dump(2) + "\n");
    std::cerr << "evaluator holdout accuracy " << report.holdout_accuracy << "\n";
    return kOk;
  }

  ModelConfig mc;
  mc.feature_dim = basis.size();
  if (a.preset == "lvm-light") mc.blocks = 4;
  const GraspSet data = grasp_set(d, basis, {Split::train});
  const ProgressFn progress = [&](int it, double loss) {
    if ((it + 1) % 1000 == 0) std::cerr << "iteration " << it + 1 << " loss " << loss << "\n";
  };

  TrainLog log;
  if (a.preset == "cnf") {
    CnfModel m(mc, rng);
    m.basis = basis;
    log = train_cnf(m, data, tc, progress);
    save_model(run.path("model.ckpt"), m);
  } else if (a.preset == "cvae") {
    CvaeBaseline m(mc, rng);
    m.basis = basis;
    log = train_cvae(m, data, tc, progress);
    save_model(run.path("model.ckpt"), m);
  } else {
    LvmModel m(mc, rng);
    m.basis = basis;
    log = train_lvm(m, data, tc, progress);
    save_model(run.path("model.ckpt"), m);
  }
  write_loss_csv(run.path("loss.csv"), log);
  if (log.diverged) {
    std::cerr << "training diverged in term '" << log.divergence << "'; kept the last good snapshot\n";
    return kNumeric;
  }
  return kOk;
}

// ------------------------------------------------------- observation input

struct SceneArgs {
  std::string dataset;
  Index view = 0;
  std::string cloud;
};

void add_scene(CLI::App* sub, SceneArgs& a) {
  auto* ds = sub->add_option("--dataset", a.dataset, "Dataset directory (with --view)");
  sub->add_option("--view", a.view, "View id within the dataset")->capture_default_str();
  auto* cl = sub->add_option("--cloud", a.cloud, "Point cloud file instead of a dataset view");
  ds->excludes(cl);
}

struct Scene {
  PointCloud cloud;
  std::optional<ShapeSpec> shape;  // known for dataset views, enables oracle labels
};

Scene load_scene(const SceneArgs& a) {
  Scene s;
  if (!a.cloud.empty()) {
    s.cloud = load_cloud(a.cloud);
    return s;
  }
  if (a.dataset.empty()) throw ContractError("either --dataset/--view or --cloud is required");
  const Dataset d = load_dataset(a.dataset);
  if (a.view < 0 || a.view >= static_cast<Index>(d.views.size()))
    throw ContractError("--view " + std::to_string(a.view) + " is out of range");
  s.cloud = d.clouds[static_cast<std::size_t>(a.view)];
  s.shape = d.views[static_cast<std::size_t>(a.view)].shape;
  return s;
}

// ----------------------------------------------------------------- sample

struct SampleArgs {
  std::string model;
  std::string out;
  Index n_grasps = 100;
  std::uint64_t seed = 0;
  SceneArgs scene;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* sub = app.add_subcommand("sample", "Draw grasps for one observation");
  sub->fallthrough();
  sub->add_option("--model", a.model, "Checkpoint of an lvm, cnf or cvae model")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--n-grasps", a.n_grasps, "Number of grasps")->capture_default_str();
  sub->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  add_scene(sub, a.scene);
}

json scene_json(const SceneArgs& a) {
  if (!a.cloud.empty()) return {{"cloud", a.cloud}};
  return {{"dataset", a.dataset}, {"view", a.view}};
}

int cmd_sample(SampleArgs& a, int argc, char** argv) {
  if (a.n_grasps < 1) throw ContractError("--n-grasps must be positive");
  const Checkpoint ckpt = read_checkpoint(a.model);
  const Scene scene = load_scene(a.scene);
  json resolved = {{"model", a.model}, {"out", a.out}, {"n-grasps", a.n_grasps}, {"seed", a.seed}};
  resolved.update(scene_json(a.scene));
  RunDir run(a.out, "sample", resolved, argc, argv);
  Rng rng(a.seed);

  Matrix grasps;
  Vector grasp_logp, prior_logp;
  BpsBasis basis;
  if (ckpt.kind == "lvm") {
    const LvmModel m = load_lvm(ckpt);
    basis = m.basis;
    const auto s = m.sample(observe(scene.cloud, basis).feature, a.n_grasps, rng);
    grasps = s.grasps;
    grasp_logp = s.grasp_logp;
    prior_logp = s.prior_logp;
  } else if (ckpt.kind == "cnf") {
    const CnfModel m = load_cnf(ckpt);
    basis = m.basis;
    const auto s = m.sample(observe(scene.cloud, basis).feature, a.n_grasps, rng);
    grasps = s.grasps;
    grasp_logp = s.log_prob;
  } else if (ckpt.kind == "cvae") {
    const CvaeBaseline m = load_cvae(ckpt);
    basis = m.basis;
    grasps = m.sample(observe(scene.cloud, basis).feature, a.n_grasps, rng);
  } else {
    throw ContractError("sample needs a generative model, got '" + ckpt.kind + "'");
  }
  const CanonicalFrame frame = observe(scene.cloud, basis).frame;

  std::ostringstream out;
  out << std::setprecision(10) << "index," << grasp_header()
      << ",object_tx,object_ty,object_tz,grasp_logp,prior_logp,clamped_joints";
  if (scene.shape) out << ",feasible,reason";
  out << '\n';
  for (Index i = 0; i < grasps.rows(); ++i) {
    int clamped = 0;
    const GraspConfig g = to_object_frame(grasps.row(i), frame, &clamped);
    out << i << ',';
    write_row(out, grasps.row(i));
    out << ',' << g.translation.x() << ',' << g.translation.y() << ',' << g.translation.z() << ',';
    if (grasp_logp.size()) out << grasp_logp(i);
    out << ',';
    if (prior_logp.size()) out << prior_logp(i);
    out << ',' << clamped;
    if (scene.shape) {
      const GraspLabel label = label_grasp(*scene.shape, g);
      out << ',' << label.feasible << ',' << to_string(label.reason);
    }
    out << '\n';
  }
  io::write_file(run.path("grasps.csv"), out.str());
  return kOk;
}

// ------------------------------------------------------------------ score

struct ScoreArgs {
  std::string model;
  std::string evaluator;
  std::string out;
  double epsilon = 0.01;
  Index n_grasps = 100;
  std::uint64_t seed = 0;
  SceneArgs scene;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  auto* sub = app.add_subcommand("score", "Sample, evaluate and rank grasps with likelihood fusion");
  sub->fallthrough();
  sub->add_option("--model", a.model, "LVM checkpoint")->required();
  sub->add_option("--evaluator", a.evaluator, "Evaluator checkpoint")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--epsilon", a.epsilon, "Weight of the evaluator score")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--n-grasps", a.n_grasps, "Number of candidate grasps")->capture_default_str();
  sub->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  add_scene(sub, a.scene);
}

int cmd_score(ScoreArgs& a, int argc, char** argv) {
  if (a.n_grasps < 2) throw ContractError("--n-grasps must be at least 2");
  const Checkpoint ckpt = read_checkpoint(a.model);
  if (ckpt.kind != "lvm") throw ContractError("score needs an lvm checkpoint, got '" + ckpt.kind + "'");
  const LvmModel model = load_lvm(ckpt);
  const Evaluator evaluator = load_evaluator(a.evaluator);
  if (evaluator.basis.points != model.basis.points)
    throw DataError("model and evaluator were trained with different BPS bases");
  const Scene scene = load_scene(a.scene);
  json resolved = {{"model", a.model}, {"evaluator", a.evaluator}, {"out", a.out}, {"epsilon", a.epsilon},
                   {"n-grasps", a.n_grasps}, {"seed", a.seed}};
  resolved.update(scene_json(a.scene));
  RunDir run(a.out, "score", resolved, argc, argv);

  const Observation obs = observe(scene.cloud, model.basis);
  Rng rng(a.seed);
  const auto s = model.sample(obs.feature, a.n_grasps, rng);
  const Vector scores = evaluator.evaluate(obs.feature, s.grasps);
  const Vector fused = fuse(scores, s.grasp_logp, a.epsilon);
  const auto order = rank_and_select(fused, s.grasp_logp, a.n_grasps);

  std::ostringstream out;
  out << std::setprecision(10) << "rank,index,fused,score,grasp_logp,prior_logp," << grasp_header();
  if (scene.shape) out << ",feasible";
  out << '\n';
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Index i = order[r];
    out << r << ',' << i << ',' << fused(i) << ',' << scores(i) << ',' << s.grasp_logp(i) << ','
        << s.prior_logp(i) << ',';
    write_row(out, s.grasps.row(i));
    if (scene.shape) out << ',' << label_grasp(*scene.shape, to_object_frame(s.grasps.row(i), obs.frame)).feasible;
    out << '\n';
  }
  io::write_file(run.path("ranking.csv"), out.str());
  return kOk;
}

// -------------------------------------------------------------------- ood

struct OodArgs {
  std::string model;
  std::string out;
  std::vector<std::string> families{"box", "cylinder"};
  std::vector<std::string> novel_families;
  Index count = 100;
  std::uint64_t seed = 0;
};

void add_ood(CLI::App& app, OodArgs& a) {
  auto* sub = app.add_subcommand("ood", "Object-level OOD scores from the prior flow");
  sub->fallthrough();
  sub->add_option("--model", a.model, "LVM checkpoint")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--families", a.families, "Families to score")->capture_default_str();
  sub->add_option("--novel-families", a.novel_families, "Second family list; enables the AUROC report");
  sub->add_option("--count", a.count, "Clouds per family list")->capture_default_str();
  sub->add_option("--seed", a.seed, "Scene and scoring seed")->capture_default_str();
}

int cmd_ood(OodArgs& a, int argc, char** argv) {
  const Checkpoint ckpt = read_checkpoint(a.model);
  if (ckpt.kind != "lvm") throw ContractError("ood needs an lvm checkpoint, got '" + ckpt.kind + "'");
  const LvmModel model = load_lvm(ckpt);
  const auto known = parse_families(a.families);
  const auto novel = parse_families(a.novel_families);
  json resolved = {{"model", a.model}, {"out", a.out}, {"families", a.families}, {"count", a.count}, {"seed", a.seed}};
  if (!a.novel_families.empty()) resolved["novel-families"] = a.novel_families;
  RunDir run(a.out, "ood", resolved, argc, argv);
  DatasetConfig scenes;
  scenes.frame_radius = model.basis.radius;

  std::ostringstream out;
  out << std::setprecision(10) << "index,family,group,ood_score\n";
  json summary;
  if (novel.empty()) {
    for (Index k = 0; k < a.count; ++k) {
      const ShapeFamily f = known[static_cast<std::size_t>(k) % known.size()];
      const std::uint64_t s = derive_seed(a.seed, static_cast<std::uint64_t>(k));
      const SceneView view = make_view(f, Split::heldout, s, scenes);
      Rng rng(s);
      out << k << ',' << to_string(f) << ",known," << model.ood_score(observe(view.partial, model.basis).feature, rng) << '\n';
    }
  } else {
    const OodStudy study = ood_study(model, known, novel, a.count, scenes, a.seed);
    for (std::size_t k = 0; k < study.clouds.size(); ++k)
      out << k << ',' << study.clouds[k].family << ',' << (study.clouds[k].novel ? "novel" : "known") << ','
          << study.clouds[k].score << '\n';
    summary["auroc"] = study.auroc;
    std::cerr << "AUROC " << study.auroc << "\n";
  }
  summary["count"] = a.count;
  io::write_file(run.path("ood.csv"), out.str());
  io::write_file(run.path("summary.json"), summary.dump(2) + "\n");
  return kOk;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
  std::string model;
  std::string evaluator;
  std::string dataset;
  std::string out;
  std::vector<std::string> splits{"heldout", "similar", "novel"};
  Index n_grasps = 100;
  std::uint64_t seed = 0;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* sub = app.add_subcommand("bench", "Selection benchmark over fusion strategies and epsilon");
  sub->fallthrough();
  sub->add_option("--model", a.model, "LVM checkpoint")->required();
  sub->add_option("--evaluator", a.evaluator, "Evaluator checkpoint")->required();
  sub->add_option("--dataset", a.dataset, "Dataset directory")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--splits", a.splits, "Splits to evaluate")->capture_default_str();
  sub->add_option("--n-grasps", a.n_grasps, "Samples per view")->capture_default_str();
  sub->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
}

int cmd_bench(BenchArgs& a, int argc, char** argv) {
  const Checkpoint ckpt = read_checkpoint(a.model);
  if (ckpt.kind != "lvm") throw ContractError("bench needs an lvm checkpoint, got '" + ckpt.kind + "'");
  const LvmModel model = load_lvm(ckpt);
  const Evaluator evaluator = load_evaluator(a.evaluator);
  if (evaluator.basis.points != model.basis.points)
    throw DataError("model and evaluator were trained with different BPS bases");
  const auto splits = parse_splits(a.splits);
  const Dataset d = load_dataset(a.dataset);
  RunDir run(a.out, "bench",
             {{"model", a.model}, {"evaluator", a.evaluator}, {"dataset", a.dataset}, {"out", a.out},
              {"splits", a.splits}, {"n-grasps", a.n_grasps}, {"seed", a.seed}},
             argc, argv);

  BenchOptions opt;
  opt.n_grasps = a.n_grasps;
  opt.seed = a.seed;
  const BenchReport report = run_benchmark(model, evaluator, d, splits, opt);
  io::write_file(run.path("bench.csv"), report.csv());

  std::ostringstream views;
  views << std::setprecision(10) << "split,view,seen,culled,seen_logp,culled_logp\n";
  for (Split s : splits)
    for (const auto& v : view_introspection(model, d, s, static_cast<Index>(d.views.size()), a.seed).views)
      views << to_string(s) << ',' << v.id << ',' << v.seen << ',' << v.culled << ',' << v.seen_logp << ','
            << v.culled_logp << '\n';
  io::write_file(run.path("introspection.csv"), views.str());
  std::cout << report.csv();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-based grasp sampling with shape-aware introspection"};
  app.set_config("--config", "", "TOML file; options go in a section named after the command");
  app.require_subcommand(1);
  DatasetArgs dataset;
  TrainArgs train;
  SampleArgs sample;
  ScoreArgs score;
  OodArgs ood;
  BenchArgs bench;
  add_dataset(app, dataset);
  add_train(app, train);
  add_sample(app, sample);
  add_score(app, score);
  add_ood(app, ood);
  add_bench(app, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "dataset") return cmd_dataset(dataset, argc, argv);
    if (name == "train") return cmd_train(train, argc, argv);
    if (name == "sample") return cmd_sample(sample, argc, argv);
    if (name == "score") return cmd_score(score, argc, argv);
    if (name == "ood") return cmd_ood(ood, argc, argv);
    return cmd_bench(bench, argc, argv);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error in " << e.term() << ": " << e.what() << "\n";
    return kNumeric;
  }
}
