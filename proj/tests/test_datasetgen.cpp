#include <doctest.h>

#include "graspflow/binary_io.hpp"
#include "graspflow/datasetgen.hpp"

#include <cmath>
#include <filesystem>

using namespace graspflow;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config(std::uint64_t seed) {
  DatasetConfig c;
  c.train_objects = 4;
  c.heldout_objects = 2;
  c.similar_objects = 2;
  c.novel_objects = 2;
  c.views_per_object = 2;
  c.heuristic_grasps = 32;
  c.jitter_grasps = 8;
  c.free_grasps = 4;
  c.cloud_points = 512;
  c.min_positive_rate = 0.0;
  c.max_positive_rate = 1.0;
  c.seed = seed;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("propose_grasps: sphere approaches point at the center") {
  ShapeSpec s;
  s.family = ShapeFamily::sphere;
  s.dims = {0.04, 0.0, 0.0};
  s.pose.translation = Vec3(0.1, -0.2, 0.3);
  const PointCloud cloud = sample_shape(s, 1);
  Rng rng(2);
  for (const auto& g : propose_grasps(cloud, 200, rng)) {
    const Vec3 a = g.approach();
    const double miss = (s.pose.translation - g.translation).cross(a).norm();
    CHECK(miss < 0.01);
    const double standoff = (g.translation - s.pose.translation).norm() - 0.04;
    CHECK(standoff >= 0.02 - 1e-9);
    CHECK(standoff <= 0.06 + 1e-9);
    CHECK(std::abs(g.rotation.determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("propose_grasps: same seed gives identical proposals") {
  ShapeSpec s;
  const PointCloud cloud = sample_shape(s, 3);
  Rng a(4), b(4);
  const auto ga = propose_grasps(cloud, 50, a);
  const auto gb = propose_grasps(cloud, 50, b);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(encode_grasp(ga[i]) == encode_grasp(gb[i]));
  const auto lim = JointLimits::defaults();
  for (const auto& g : ga) {
    CHECK((g.joints.array() >= lim.lower.array()).all());
    CHECK((g.joints.array() <= lim.upper.array()).all());
  }
}

TEST_CASE("propose_grasps: box faces give antiparallel approach axes") {
  ShapeSpec s;
  s.dims = {0.04, 0.06, 0.05};
  const PointCloud cloud = sample_shape(s, 5);
  Rng rng(6);
  for (const auto& g : propose_grasps(cloud, 100, rng)) {
    double best = 1e9;
    for (int axis = 0; axis < 3; ++axis)
      for (double sign : {-1.0, 1.0}) best = std::min(best, (g.approach() + sign * Vec3::Unit(axis)).norm());
    CHECK(best < 1e-9);
  }
}

TEST_CASE("label_grasp: trivial outcomes") {
  ShapeSpec box;
  box.dims = {0.1, 0.1, 0.1};
  GraspConfig inside;
  const GraspLabel a = label_grasp(box, inside);
  CHECK(a.reason == LabelReason::collision);
  CHECK_FALSE(a.feasible);

  GraspConfig far;
  far.translation = Vec3(1.0, 0.0, 0.0);
  const GraspLabel b = label_grasp(box, far);
  CHECK(b.reason == LabelReason::no_contact);
  CHECK(b.contacts.empty());

  CHECK(parse_reason(to_string(LabelReason::unreachable_closure)) == LabelReason::unreachable_closure);
  CHECK_THROWS_AS(parse_reason("slipped"), DataError);
}

TEST_CASE("label_grasp: antipodal pinch on a cylinder matches the analytic contacts") {
  const double radius = 0.02;
  ShapeSpec cyl;
  cyl.family = ShapeFamily::cylinder;
  cyl.dims = {radius, 0.1, 0.0};
  GraspConfig g;
  g.translation = Vec3(-0.07, 0.0, 0.0);
  g.rotation.col(0) = Vec3(0.0, 0.0, -1.0);
  g.rotation.col(1) = Vec3(0.0, 1.0, 0.0);
  g.rotation.col(2) = Vec3(1.0, 0.0, 0.0);
  const HandModel hand = HandModel::defaults();
  const LabelConfig cfg;
  const GraspLabel label = label_grasp(cyl, g, hand, cfg);
  REQUIRE(label.feasible);
  CHECK(label.reason == LabelReason::ok);
  REQUIRE(label.contacts.size() == 5u);

  // Palm frame: the cylinder axis runs along local x through (y, z) = (0, 0.07).
  // Both flex joints advance together from zero, so the tip after k steps is
  // base + L1 (sin t c + cos t z) + L2 (sin 2t c + cos 2t z) with t = k * step.
  for (const auto& c : label.contacts) {
    const auto& f = hand.fingers[static_cast<std::size_t>(c.finger)];
    Vec3 expected = Vec3::Zero();
    for (int k = 0;; ++k) {
      const double t = k * cfg.closure_step;
      const double y = f.base.y() + f.closing_sign * (hand.proximal_length * std::sin(t) +
                                                      hand.distal_length * std::sin(2.0 * t));
      const double z = hand.proximal_length * std::cos(t) + hand.distal_length * std::cos(2.0 * t);
      if (std::hypot(y, z - 0.07) - radius - hand.tip_radius <= cfg.contact_tolerance) {
        expected = g.rotation * Vec3(f.base.x(), y, z) + g.translation;
        break;
      }
      REQUIRE(k < 200);
    }
    CHECK((c.point - expected).norm() < 1e-12);
    const Vec3 radial = Vec3(c.point.x(), c.point.y(), 0.0).normalized();
    CHECK((c.normal - radial).norm() < 1e-5);
  }
  // Thumb and fingers press from opposite sides.
  CHECK(label.contacts[0].finger == 0);
  CHECK(label.contacts[0].normal.y() < -0.5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(label.contacts[i].normal.y() > 0.5);
  CHECK(label.contacts[0].normal.dot(label.contacts[1].normal) < cfg.opposition);
}

TEST_CASE("label_grasp is a deterministic function of shape and grasp") {
  ShapeSpec s;
  s.family = ShapeFamily::capsule;
  s.dims = {0.02, 0.05, 0.0};
  const PointCloud cloud = sample_shape(s, 7);
  Rng rng(8);
  for (const auto& g : propose_grasps(cloud, 64, rng)) {
    const GraspLabel a = label_grasp(s, g), b = label_grasp(s, g);
    CHECK(a.feasible == b.feasible);
    CHECK(a.reason == b.reason);
    CHECK(a.feasible == (a.reason == LabelReason::ok));
    REQUIRE(a.contacts.size() == b.contacts.size());
    for (std::size_t i = 0; i < a.contacts.size(); ++i) CHECK(a.contacts[i].point == b.contacts[i].point);
  }
}

TEST_CASE("build_dataset: deterministic manifest and split hygiene") {
  const Dataset a = build_dataset(small_config(9));
  const Dataset b = build_dataset(small_config(9));
  CHECK(a.manifest.dump() == b.manifest.dump());
  CHECK(a.manifest.dump() != build_dataset(small_config(10)).manifest.dump());
  CHECK(a.manifest.at("config_hash") == b.manifest.at("config_hash"));

  const auto& counts = a.manifest.at("counts");
  for (const char* split : {"train", "heldout", "similar"})
    for (const auto& [family, _] : counts.at(split).items()) {
      CHECK(family != "lshape");
      CHECK(family != "capsule");
    }
  for (const auto& [family, _] : counts.at("novel").items()) CHECK((family == "lshape" || family == "capsule"));
  for (const auto& v : a.views) {
    if (v.split != Split::novel)
      CHECK((v.shape.family == ShapeFamily::box || v.shape.family == ShapeFamily::cylinder));
    CHECK(v.view_direction == Vec3(0.0, 0.0, 1.0));
    // Similar sizes come from the middle third of each range, the rest from the outer thirds.
    const SizeRange r = default_sizes(v.shape.family);
    for (std::size_t i = 0; i < 3; ++i) {
      if (r.lo[i] == r.hi[i]) continue;
      const double third = (r.hi[i] - r.lo[i]) / 3.0;
      const bool middle = v.shape.dims[i] > r.lo[i] + third && v.shape.dims[i] < r.hi[i] - third;
      CHECK(middle == (v.split == Split::similar));
    }
  }
}

TEST_CASE("build_dataset: default positive rate is in band and stable across seeds") {
  std::vector<double> rates;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    DatasetConfig c;
    c.seed = seed;
    const Dataset d = build_dataset(c);
    rates.push_back(d.manifest.at("positive_rate").get<double>());
    INFO("seed " << seed << " rate " << rates.back());
    CHECK(rates.back() >= 0.1);
    CHECK(rates.back() <= 0.6);
  }
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  CHECK(*hi - *lo <= 0.05);

  DatasetConfig narrow = small_config(3);
  narrow.min_positive_rate = 0.95;
  CHECK_THROWS_AS(build_dataset(narrow), DataError);
}

TEST_CASE("dataset files round-trip and labels survive") {
  const Dataset d = build_dataset(small_config(11));
  const fs::path dir = scratch("graspflow_test_dataset");
  save_dataset(dir.string(), d);
  const Dataset back = load_dataset(dir.string());
  REQUIRE(back.views.size() == d.views.size());
  CHECK(back.manifest == d.manifest);
  for (std::size_t i = 0; i < d.views.size(); ++i) {
    CHECK(to_json(back.views[i]).dump() == to_json(d.views[i]).dump());
    CHECK(back.clouds[i].points == d.clouds[i].points);
    CHECK(back.clouds[i].normals == d.clouds[i].normals);
  }

  // Saving the loaded copy reproduces the files byte for byte.
  const fs::path dir2 = scratch("graspflow_test_dataset2");
  save_dataset(dir2.string(), back);
  for (const char* f : {"manifest.json", "records.jsonl", "clouds/000000.bin"})
    CHECK(io::read_file((dir / f).string()) == io::read_file((dir2 / f).string()));

  int checked = 0;
  for (const auto& v : back.views)
    for (const auto& e : v.grasps) {
      const GraspConfig object = decode_grasp(e.object).grasp;
      CHECK(label_grasp(v.shape, object).feasible == e.feasible);
      const GraspConfig again = to_object_frame(e.canonical, v.frame);
      CHECK((again.translation - object.translation).norm() < 1e-12);
      checked += e.feasible;
    }
  CHECK(checked > 0);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("load_dataset rejects damaged files") {
  const Dataset d = build_dataset(small_config(12));
  const fs::path dir = scratch("graspflow_test_dataset_bad");
  save_dataset(dir.string(), d);
  std::string records = io::read_file((dir / "records.jsonl").string());
  io::write_file((dir / "records.jsonl").string(), records.substr(0, records.size() / 2));
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  io::write_file((dir / "records.jsonl").string(), records);
  std::string cloud = io::read_file((dir / "clouds/000001.bin").string());
  cloud[cloud.size() / 2] ^= 0x5a;
  io::write_file((dir / "clouds/000001.bin").string(), cloud);
  CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
  CHECK_THROWS_AS(load_dataset((dir / "missing").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("grasp_set and labeled_set follow the dataset") {
  const Dataset d = build_dataset(small_config(13));
  const BpsBasis basis = make_basis(64, d.config.frame_radius, 14);
  const GraspSet train = grasp_set(d, basis, {Split::train});
  const LabeledSet labeled = labeled_set(d, basis, {Split::train, Split::heldout});
  std::size_t views = 0, positives = 0, all = 0;
  for (const auto& v : d.views) {
    if (v.split == Split::train) {
      ++views;
      for (const auto& e : v.grasps) positives += e.feasible;
    }
    if (v.split == Split::train || v.split == Split::heldout) all += v.grasps.size();
  }
  CHECK(train.features.rows() == static_cast<Index>(views));
  CHECK(train.size() == static_cast<Index>(positives));
  CHECK(labeled.size() == static_cast<Index>(all));
  train.validate(64, kGraspDim);
  CHECK_THROWS_AS(grasp_set(d, make_basis(64, 0.2, 14), {Split::train}), DataError);
}

TEST_CASE("dataset config JSON round trip and validation") {
  DatasetConfig c = small_config(15);
  c.novel_families = {ShapeFamily::sphere};
  const DatasetConfig back = dataset_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  nlohmann::json bad = to_json(c);
  bad["novel_families"] = {"box"};
  CHECK_THROWS_AS(dataset_config_from_json(bad), DataError);
  bad = to_json(c);
  bad["train_families"] = {"pyramid"};
  CHECK_THROWS_AS(dataset_config_from_json(bad), DataError);
}
