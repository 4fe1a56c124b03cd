#include "graspflow/datasetgen.hpp"

#include "graspflow/binary_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>

namespace graspflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::heldout: return "heldout";
    case Split::similar: return "similar";
    case Split::novel: return "novel";
  }
  return "unknown";
}

Split parse_split(const std::string& s) {
  for (auto v : {Split::train, Split::heldout, Split::similar, Split::novel})
    if (to_string(v) == s) return v;
  throw DataError("unknown split '" + s + "'");
}

SizeRange default_sizes(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::box: return {{0.03, 0.03, 0.03}, {0.07, 0.07, 0.07}};
    case ShapeFamily::cylinder: return {{0.015, 0.05, 0.0}, {0.035, 0.12, 0.0}};
    case ShapeFamily::lshape: return {{0.05, 0.015, 0.02}, {0.08, 0.03, 0.05}};
    case ShapeFamily::capsule: return {{0.015, 0.03, 0.0}, {0.03, 0.08, 0.0}};
    case ShapeFamily::sphere: return {{0.02, 0.0, 0.0}, {0.045, 0.0, 0.0}};
  }
  throw ContractError("default_sizes: unknown family");
}

void DatasetConfig::validate() const {
  if (train_families.empty() || novel_families.empty()) throw DataError("dataset config: empty family list");
  for (auto f : train_families)
    if (std::find(novel_families.begin(), novel_families.end(), f) != novel_families.end())
      throw DataError("dataset config: family '" + to_string(f) + "' is both train and novel");
  if (train_objects < 1 || heldout_objects < 0 || similar_objects < 0 || novel_objects < 0)
    throw DataError("dataset config: object counts must be non-negative (and train >= 1)");
  if (views_per_object < 1 || heuristic_grasps < 1 || jitter_grasps < 0 || free_grasps < 0)
    throw DataError("dataset config: views and grasp counts must be positive");
  if (cloud_points < 16) throw DataError("dataset config: cloud_points must be at least 16");
  if (!(std::abs(camera_direction.norm() - 1.0) < 1e-9)) throw DataError("dataset config: camera_direction must be a unit vector");
  if (!(frame_radius > 0.0)) throw DataError("dataset config: frame_radius must be positive");
  if (!(min_positive_rate >= 0.0 && min_positive_rate <= max_positive_rate && max_positive_rate <= 1.0))
    throw DataError("dataset config: bad positive-rate band");
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

json families_json(const std::vector<ShapeFamily>& fs) {
  json out = json::array();
  for (auto f : fs) out.push_back(to_string(f));
  return out;
}

std::vector<ShapeFamily> families_from(const json& j) {
  std::vector<ShapeFamily> out;
  for (const auto& s : j) out.push_back(parse_family(s.get<std::string>()));
  return out;
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVector row_from(const json& j, Index expected, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != expected) throw DataError(std::string(what) + ": wrong length");
  RowVector r(expected);
  for (Index i = 0; i < expected; ++i) r(i) = v[static_cast<std::size_t>(i)];
  return r;
}

Vec3 vec3_from(const json& j, const char* what) { return row_from(j, 3, what).transpose(); }

Mat3 random_rotation(Rng& rng) {
  const Matrix q = standard_normal(1, 4, rng);
  return Eigen::Quaterniond(q(0, 0), q(0, 1), q(0, 2), q(0, 3)).normalized().toRotationMatrix();
}

// Similar objects draw every dimension from the middle third of its range;
// all other splits draw from the outer thirds.
ShapeSpec sample_object(ShapeFamily family, bool similar, Rng& rng) {
  const SizeRange r = default_sizes(family);
  ShapeSpec s;
  s.family = family;
  for (std::size_t i = 0; i < 3; ++i) {
    if (r.lo[i] == r.hi[i]) {
      s.dims[i] = r.lo[i];
      continue;
    }
    const double third = (r.hi[i] - r.lo[i]) / 3.0;
    if (similar) {
      s.dims[i] = uniform(rng, r.lo[i] + third, r.hi[i] - third);
    } else {
      const double u = uniform(rng, 0.0, 2.0 * third);
      s.dims[i] = r.lo[i] + u + (u >= third ? third : 0.0);
    }
  }
  return s;
}

GraspConfig jittered(const GraspConfig& g, Rng& rng) {
  const JointLimits limits = JointLimits::defaults();
  std::normal_distribution<double> n(0.0, 1.0);
  GraspConfig out = g;
  out.translation += 0.01 * Vec3(n(rng), n(rng), n(rng));
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  out.rotation = Eigen::AngleAxisd(0.15 * n(rng), axis).toRotationMatrix() * g.rotation;
  for (Index j = 0; j < kJointCount; ++j)
    out.joints(j) = std::clamp(g.joints(j) + 0.05 * n(rng), limits.lower(j), limits.upper(j));
  return out;
}

GraspConfig free_pose(const ShapeSpec& shape, Rng& rng) {
  const JointLimits limits = JointLimits::defaults();
  GraspConfig g;
  g.translation = shape.pose.translation + Vec3(uniform(rng, -0.12, 0.12), uniform(rng, -0.12, 0.12),
                                                uniform(rng, -0.12, 0.12));
  g.rotation = random_rotation(rng);
  for (Index j = 0; j < kJointCount; ++j) g.joints(j) = uniform(rng, limits.lower(j), 0.5 * limits.upper(j));
  return g;
}

GraspEntry make_entry(const ShapeSpec& shape, const CanonicalFrame& frame, const GraspConfig& g,
                      const std::string& source) {
  const GraspLabel label = label_grasp(shape, g);
  GraspEntry e;
  e.object = encode_grasp(g);
  GraspConfig c = g;
  c.translation = frame.to_canonical(g.translation);
  e.canonical = encode_grasp(c);
  e.feasible = label.feasible;
  e.reason = label.reason;
  e.source = source;
  return e;
}

struct ObjectPlan {
  ShapeFamily family;
  Split split;
};

std::vector<ObjectPlan> plan_objects(const DatasetConfig& c) {
  std::vector<ObjectPlan> out;
  auto add = [&](Split s, int count, const std::vector<ShapeFamily>& fams) {
    for (int i = 0; i < count; ++i) out.push_back({fams[static_cast<std::size_t>(i) % fams.size()], s});
  };
  add(Split::train, c.train_objects, c.train_families);
  add(Split::heldout, c.heldout_objects, c.train_families);
  add(Split::similar, c.similar_objects, c.train_families);
  add(Split::novel, c.novel_objects, c.novel_families);
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string cloud_name(Index id) {
  std::ostringstream s;
  s << "clouds/" << std::setw(6) << std::setfill('0') << id << ".bin";
  return s.str();
}

}  // namespace

json to_json(const DatasetConfig& c) {
  return {{"train_families", families_json(c.train_families)},
          {"novel_families", families_json(c.novel_families)},
          {"train_objects", c.train_objects},
          {"heldout_objects", c.heldout_objects},
          {"similar_objects", c.similar_objects},
          {"novel_objects", c.novel_objects},
          {"views_per_object", c.views_per_object},
          {"heuristic_grasps", c.heuristic_grasps},
          {"jitter_grasps", c.jitter_grasps},
          {"free_grasps", c.free_grasps},
          {"cloud_points", c.cloud_points},
          {"camera_direction", vec_json(c.camera_direction)},
          {"frame_radius", c.frame_radius},
          {"min_positive_rate", c.min_positive_rate},
          {"max_positive_rate", c.max_positive_rate},
          {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  try {
    if (j.contains("train_families")) c.train_families = families_from(j.at("train_families"));
    if (j.contains("novel_families")) c.novel_families = families_from(j.at("novel_families"));
    c.train_objects = j.value("train_objects", c.train_objects);
    c.heldout_objects = j.value("heldout_objects", c.heldout_objects);
    c.similar_objects = j.value("similar_objects", c.similar_objects);
    c.novel_objects = j.value("novel_objects", c.novel_objects);
    c.views_per_object = j.value("views_per_object", c.views_per_object);
    c.heuristic_grasps = j.value("heuristic_grasps", c.heuristic_grasps);
    c.jitter_grasps = j.value("jitter_grasps", c.jitter_grasps);
    c.free_grasps = j.value("free_grasps", c.free_grasps);
    c.cloud_points = j.value("cloud_points", c.cloud_points);
    if (j.contains("camera_direction")) c.camera_direction = vec3_from(j.at("camera_direction"), "camera_direction");
    c.frame_radius = j.value("frame_radius", c.frame_radius);
    c.min_positive_rate = j.value("min_positive_rate", c.min_positive_rate);
    c.max_positive_rate = j.value("max_positive_rate", c.max_positive_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset config: ") + e.what());
  } catch (const std::logic_error& e) {
    throw DataError(std::string("dataset config: ") + e.what());
  }
  c.validate();
  return c;
}

SceneView make_view(ShapeFamily family, Split split, std::uint64_t seed, const DatasetConfig& config) {
  Rng rng(seed);
  SceneView v;
  v.split = split;
  v.shape = sample_object(family, split == Split::similar, rng);
  v.shape.samples = config.cloud_points;
  v.shape.pose.rotation = random_rotation(rng);
  v.full = sample_shape(v.shape, derive_seed(seed, 1));
  v.partial = partial_view(v.full, config.camera_direction);
  return v;
}

Dataset build_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset d;
  d.config = config;
  const auto objects = plan_objects(config);
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const std::uint64_t object_seed = derive_seed(config.seed, o);
    Rng object_rng(object_seed);
    const ShapeSpec base = sample_object(objects[o].family, objects[o].split == Split::similar, object_rng);
    for (int v = 0; v < config.views_per_object; ++v) {
      Rng rng(derive_seed(object_seed, static_cast<std::uint64_t>(v) + 1));
      ViewRecord r;
      r.id = static_cast<Index>(d.views.size());
      r.object = static_cast<Index>(o);
      r.split = objects[o].split;
      r.shape = base;
      r.shape.samples = config.cloud_points;
      r.shape.pose.rotation = random_rotation(rng);
      r.view_direction = config.camera_direction;
      r.cloud_file = cloud_name(r.id);
      const PointCloud full = sample_shape(r.shape, rng());
      PointCloud partial = partial_view(full, config.camera_direction);
      r.frame = canonical_frame(partial, config.frame_radius);
      r.cloud_checksum = io::fnv1a(serialize_cloud(partial));

      std::vector<GraspConfig> feasible;
      for (const auto& g : propose_grasps(full, config.heuristic_grasps, rng)) {
        r.grasps.push_back(make_entry(r.shape, r.frame, g, "heuristic"));
        if (r.grasps.back().feasible) feasible.push_back(g);
      }
      for (int k = 0; k < config.jitter_grasps && !feasible.empty(); ++k)
        r.grasps.push_back(make_entry(r.shape, r.frame, jittered(feasible[k % feasible.size()], rng), "jitter"));
      for (int k = 0; k < config.free_grasps; ++k)
        r.grasps.push_back(make_entry(r.shape, r.frame, free_pose(r.shape, rng), "free"));

      d.views.push_back(std::move(r));
      d.clouds.push_back(std::move(partial));
    }
  }
  d.manifest = make_manifest(d);
  const double rate = d.manifest.at("positive_rate").get<double>();
  if (rate < config.min_positive_rate || rate > config.max_positive_rate) {
    std::ostringstream msg;
    msg << "dataset positive rate " << rate << " is outside [" << config.min_positive_rate << ", "
        << config.max_positive_rate << "]";
    throw DataError(msg.str());
  }
  return d;
}

json make_manifest(const Dataset& d) {
  const json config = to_json(d.config);

  json counts = json::object();
  std::map<std::string, std::set<Index>> objects;
  std::size_t total = 0, positives = 0;
  for (const auto& v : d.views) {
    const std::string split = to_string(v.split), family = to_string(v.shape.family);
    json& c = counts[split][family];
    if (c.is_null()) c = {{"objects", 0}, {"views", 0}, {"grasps", 0}, {"positives", 0}};
    objects[split + "/" + family].insert(v.object);
    c["objects"] = objects[split + "/" + family].size();
    c["views"] = c["views"].get<std::size_t>() + 1;
    const auto pos = static_cast<std::size_t>(
        std::count_if(v.grasps.begin(), v.grasps.end(), [](const GraspEntry& e) { return e.feasible; }));
    c["grasps"] = c["grasps"].get<std::size_t>() + v.grasps.size();
    c["positives"] = c["positives"].get<std::size_t>() + pos;
    total += v.grasps.size();
    positives += pos;
  }
  const json train = families_json(d.config.train_families);
  return {{"format", "graspflow-dataset"},
          {"version", 1},
          {"seed", d.config.seed},
          {"config", config},
          {"config_hash", hex64(io::fnv1a(config.dump()))},
          {"splits", {{"train", train}, {"heldout", train}, {"similar", train},
                      {"novel", families_json(d.config.novel_families)}}},
          {"counts", counts},
          {"views", d.views.size()},
          {"grasps", total},
          {"positives", positives},
          {"positive_rate", total ? static_cast<double>(positives) / static_cast<double>(total) : 0.0}};
}

json to_json(const ViewRecord& r) {
  json grasps = json::array();
  for (const auto& g : r.grasps)
    grasps.push_back({{"canonical", vec_json(g.canonical.transpose())},
                      {"object", vec_json(g.object.transpose())},
                      {"feasible", g.feasible},
                      {"reason", to_string(g.reason)},
                      {"source", g.source}});
  Eigen::Matrix<double, 3, 3, Eigen::RowMajor> rot = r.shape.pose.rotation;
  return {{"id", r.id},
          {"object", r.object},
          {"split", to_string(r.split)},
          {"shape",
           {{"family", to_string(r.shape.family)},
            {"dims", r.shape.dims},
            {"rotation", std::vector<double>(rot.data(), rot.data() + 9)},
            {"translation", vec_json(r.shape.pose.translation)},
            {"samples", r.shape.samples}}},
          {"view_direction", vec_json(r.view_direction)},
          {"cloud", r.cloud_file},
          {"cloud_fnv1a", hex64(r.cloud_checksum)},
          {"frame", {{"centroid", vec_json(r.frame.centroid)}, {"scale", r.frame.scale}}},
          {"grasps", grasps}};
}

ViewRecord view_record_from_json(const json& j) {
  ViewRecord r;
  try {
    r.id = j.at("id").get<Index>();
    r.object = j.at("object").get<Index>();
    r.split = parse_split(j.at("split").get<std::string>());
    const json& s = j.at("shape");
    r.shape.family = parse_family(s.at("family").get<std::string>());
    r.shape.dims = s.at("dims").get<std::array<double, 3>>();
    const RowVector rot = row_from(s.at("rotation"), 9, "shape rotation");
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.shape.pose.rotation(a, b) = rot(3 * a + b);
    r.shape.pose.translation = vec3_from(s.at("translation"), "shape translation");
    r.shape.samples = s.at("samples").get<int>();
    r.view_direction = vec3_from(j.at("view_direction"), "view_direction");
    r.cloud_file = j.at("cloud").get<std::string>();
    r.cloud_checksum = std::stoull(j.at("cloud_fnv1a").get<std::string>(), nullptr, 16);
    r.frame.centroid = vec3_from(j.at("frame").at("centroid"), "frame centroid");
    r.frame.scale = j.at("frame").at("scale").get<double>();
    for (const auto& g : j.at("grasps")) {
      GraspEntry e;
      e.canonical = row_from(g.at("canonical"), kGraspDim, "canonical grasp");
      e.object = row_from(g.at("object"), kGraspDim, "object grasp");
      e.feasible = g.at("feasible").get<bool>();
      e.reason = parse_reason(g.at("reason").get<std::string>());
      e.source = g.at("source").get<std::string>();
      if (e.feasible != (e.reason == LabelReason::ok)) throw DataError("grasp label and reason disagree");
      r.grasps.push_back(std::move(e));
    }
    r.shape.validate();
  } catch (const json::exception& e) {
    throw DataError(std::string("view record: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("view record: ") + e.what());
  } catch (const std::logic_error& e) {
    throw DataError(std::string("view record: ") + e.what());
  }
  return r;
}

void save_dataset(const std::string& dir, const Dataset& d) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "clouds", ec);
  if (ec) throw DataError("cannot create dataset directory '" + dir + "': " + ec.message());
  std::string records;
  for (const auto& v : d.views) records += to_json(v).dump() + "\n";
  io::write_file((fs::path(dir) / "records.jsonl").string(), records);
  for (std::size_t i = 0; i < d.views.size(); ++i)
    save_cloud((fs::path(dir) / d.views[i].cloud_file).string(), d.clouds[i]);
  io::write_file((fs::path(dir) / "manifest.json").string(), d.manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  try {
    d.manifest = json::parse(io::read_file((fs::path(dir) / "manifest.json").string()));
    d.config = dataset_config_from_json(d.manifest.at("config"));
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset manifest: ") + e.what());
  }
  std::istringstream lines(io::read_file((fs::path(dir) / "records.jsonl").string()));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(std::string("records.jsonl: ") + e.what());
    }
    ViewRecord r = view_record_from_json(j);
    if (r.id != static_cast<Index>(d.views.size())) throw DataError("records.jsonl: view ids are not sequential");
    const std::string bytes = io::read_file((fs::path(dir) / r.cloud_file).string());
    if (io::fnv1a(bytes) != r.cloud_checksum) throw FormatError(r.cloud_file + ": checksum mismatch");
    d.clouds.push_back(deserialize_cloud(bytes));
    d.views.push_back(std::move(r));
  }
  if (d.manifest.value("views", std::size_t{0}) != d.views.size())
    throw DataError("dataset: manifest view count does not match records.jsonl");
  return d;
}

namespace {

bool wanted(Split s, const std::vector<Split>& splits) {
  return std::find(splits.begin(), splits.end(), s) != splits.end();
}

// Features of the selected views; checks the stored frame against the basis.
Matrix view_features(const Dataset& d, const BpsBasis& basis, const std::vector<Split>& splits,
                     std::vector<Index>& rows_of_view) {
  if (basis.radius != d.config.frame_radius)
    throw DataError("basis radius does not match the dataset's canonical frame radius");
  std::vector<RowVector> feats;
  rows_of_view.assign(d.views.size(), -1);
  for (std::size_t i = 0; i < d.views.size(); ++i) {
    if (!wanted(d.views[i].split, splits)) continue;
    const Observation obs = observe(d.clouds[i], basis);
    if ((obs.frame.centroid - d.views[i].frame.centroid).cwiseAbs().maxCoeff() > 1e-12 ||
        std::abs(obs.frame.scale - d.views[i].frame.scale) > 1e-12)
      throw DataError("view " + std::to_string(i) + ": stored frame does not match its cloud");
    rows_of_view[i] = static_cast<Index>(feats.size());
    feats.push_back(obs.feature);
  }
  Matrix f(static_cast<Index>(feats.size()), basis.size());
  for (std::size_t i = 0; i < feats.size(); ++i) f.row(static_cast<Index>(i)) = feats[i];
  return f;
}

}  // namespace

GraspSet grasp_set(const Dataset& d, const BpsBasis& basis, const std::vector<Split>& splits, bool positives_only) {
  std::vector<Index> rows_of_view;
  GraspSet s;
  s.features = view_features(d, basis, splits, rows_of_view);
  std::vector<const RowVector*> picked;
  for (std::size_t i = 0; i < d.views.size(); ++i) {
    if (rows_of_view[i] < 0) continue;
    for (const auto& g : d.views[i].grasps)
      if (g.feasible || !positives_only) {
        picked.push_back(&g.canonical);
        s.owner.push_back(rows_of_view[i]);
      }
  }
  s.grasps.resize(static_cast<Index>(picked.size()), kGraspDim);
  for (std::size_t i = 0; i < picked.size(); ++i) s.grasps.row(static_cast<Index>(i)) = *picked[i];
  return s;
}

LabeledSet labeled_set(const Dataset& d, const BpsBasis& basis, const std::vector<Split>& splits) {
  std::vector<Index> rows_of_view;
  LabeledSet s;
  s.features = view_features(d, basis, splits, rows_of_view);
  std::vector<const RowVector*> picked;
  for (std::size_t i = 0; i < d.views.size(); ++i) {
    if (rows_of_view[i] < 0) continue;
    for (const auto& g : d.views[i].grasps) {
      picked.push_back(&g.canonical);
      s.owner.push_back(rows_of_view[i]);
      s.labels.push_back(g.feasible ? 1 : 0);
    }
  }
  s.grasps.resize(static_cast<Index>(picked.size()), kGraspDim);
  for (std::size_t i = 0; i < picked.size(); ++i) s.grasps.row(static_cast<Index>(i)) = *picked[i];
  return s;
}

GraspConfig to_object_frame(const RowVector& canonical, const CanonicalFrame& frame, int* clamped_joints) {
  DecodedGrasp dg = decode_grasp(canonical);
  if (clamped_joints) *clamped_joints = dg.clamped_joints;
  dg.grasp.translation = frame.to_object(dg.grasp.translation);
  return dg.grasp;
}

}  // namespace graspflow
