#pragma once

#include "graspflow/bps.hpp"
#include "graspflow/evaluator.hpp"
#include "graspflow/grasp.hpp"
#include "graspflow/models.hpp"
#include "graspflow/pointcloud.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <string>
#include <vector>

namespace graspflow {

// ------------------------------------------------------------- hand proxy

/// Sphere proxy of a five-finger hand in the palm frame: z is the approach
/// direction, the thumb sits at -y and closes toward +y, the other four
/// fingers sit at +y along x and close toward -y.
struct HandModel {
  struct Finger {
    Vec3 base;
    double closing_sign;  // +1 closes toward +y, -1 toward -y
  };
  std::array<Finger, 5> fingers;
  double proximal_length = 0.045;
  double distal_length = 0.035;
  double link_radius = 0.010;
  double tip_radius = 0.009;
  Vec3 palm_center{0.0, 0.0, -0.012};
  Vec3 palm_half_extent{0.045, 0.05, 0.012};

  static HandModel defaults();

  struct Sphere {
    Vec3 center;
    double radius;
  };
  /// Link sphere, knuckle sphere and fingertip sphere of finger `f` for the
  /// given (abduction, proximal flex, distal flex), in the palm frame.
  std::array<Sphere, 3> finger_spheres(int f, double abduction, double flex1, double flex2) const;
};

enum class LabelReason { ok, collision, no_contact, unreachable_closure };

std::string to_string(LabelReason r);
LabelReason parse_reason(const std::string& s);

struct Contact {
  int finger = 0;
  Vec3 point;   // fingertip sphere center at contact, object frame
  Vec3 normal;  // outward surface normal near the contact
};

struct GraspLabel {
  bool feasible = false;
  LabelReason reason = LabelReason::no_contact;
  std::vector<Contact> contacts;
};

struct LabelConfig {
  double penetration_tolerance = 1e-3;  // sphere may sink this far before it collides
  double contact_tolerance = 2e-3;      // fingertip gap that counts as touching
  double miss_distance = 0.01;          // all tips farther than this -> no contact
  double closure_step = 0.02;           // radians per sweep step
  double opposition = -0.3;             // contact normals must satisfy n_i . n_j < this
};

/// Geometric oracle for a grasp given in the object (world) frame of `shape`.
/// Closes each finger from its preshape until the fingertip touches, a link
/// touches or the joint limit is reached, then checks fingertip opposition.
GraspLabel label_grasp(const ShapeSpec& shape, const GraspConfig& grasp,
                       const HandModel& hand = HandModel::defaults(), const LabelConfig& config = {});

// ------------------------------------------------------------- proposals

/// Heuristic proposals from an oriented cloud: approach along the inward
/// normal of a random surface point, stand-off in [2, 6] cm, uniform roll,
/// and a jittered preshape template.
std::vector<GraspConfig> propose_grasps(const PointCloud& cloud, Index n, Rng& rng);

// ---------------------------------------------------------------- dataset

/// Child seed derived from a parent seed and an index (SplitMix64 finalizer).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

enum class Split { train, heldout, similar, novel };
std::string to_string(Split s);
Split parse_split(const std::string& s);

/// Per-dimension size bounds in meters; equal bounds mean the dimension is unused.
struct SizeRange {
  std::array<double, 3> lo;
  std::array<double, 3> hi;
};
/// Full size range of a family. Training, held-out and novel objects use the
/// outer thirds of every dimension; "similar" objects use the middle third.
SizeRange default_sizes(ShapeFamily family);

struct DatasetConfig {
  std::vector<ShapeFamily> train_families{ShapeFamily::box, ShapeFamily::cylinder};
  std::vector<ShapeFamily> novel_families{ShapeFamily::lshape, ShapeFamily::capsule};
  int train_objects = 48;
  int heldout_objects = 13;
  int similar_objects = 12;
  int novel_objects = 12;
  int views_per_object = 4;
  int heuristic_grasps = 128;  // per view
  int jitter_grasps = 32;      // perturbed feasible grasps per view
  int free_grasps = 16;        // random free-space poses per view
  int cloud_points = 2048;
  Vec3 camera_direction{0.0, 0.0, 1.0};
  double frame_radius = kDefaultBasisRadius;  // must match the basis used for features
  double min_positive_rate = 0.1;
  double max_positive_rate = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

struct GraspEntry {
  RowVector canonical;  // encoded grasp in the view's canonical frame
  RowVector object;     // encoded grasp in the object frame (what the label refers to)
  bool feasible = false;
  LabelReason reason = LabelReason::no_contact;
  std::string source;   // "heuristic", "jitter" or "free"
};

/// One partial view of one object with its labeled grasps.
struct ViewRecord {
  Index id = 0;
  Index object = 0;
  Split split = Split::train;
  ShapeSpec shape;
  Vec3 view_direction;
  std::string cloud_file;  // relative to the dataset directory
  std::uint64_t cloud_checksum = 0;  // FNV-1a of the cloud file bytes
  CanonicalFrame frame;
  std::vector<GraspEntry> grasps;
};

struct Dataset {
  DatasetConfig config;
  std::vector<ViewRecord> views;
  std::vector<PointCloud> clouds;  // parallel to `views`
  nlohmann::json manifest;
};

/// Generate objects, partial views and labeled grasps. Deterministic per seed.
/// Throws DataError when the positive rate leaves the configured band.
Dataset build_dataset(const DatasetConfig& config);

/// Sampled object and view for a split, without grasps (used for scoring sets).
struct SceneView {
  ShapeSpec shape;
  PointCloud full;
  PointCloud partial;
  Split split;
};
SceneView make_view(ShapeFamily family, Split split, std::uint64_t seed, const DatasetConfig& config);

nlohmann::json make_manifest(const Dataset& d);

/// Directory layout: manifest.json, records.jsonl, clouds/<id>.bin.
void save_dataset(const std::string& dir, const Dataset& d);
Dataset load_dataset(const std::string& dir);

nlohmann::json to_json(const ViewRecord& r);
ViewRecord view_record_from_json(const nlohmann::json& j);

/// Model inputs for the views in `splits`. Grasp rows are canonical-frame
/// vectors; `positives_only` keeps feasible grasps.
GraspSet grasp_set(const Dataset& d, const BpsBasis& basis, const std::vector<Split>& splits,
                   bool positives_only = true);
LabeledSet labeled_set(const Dataset& d, const BpsBasis& basis, const std::vector<Split>& splits);

/// Object-frame grasp from a canonical-frame vector of a view.
GraspConfig to_object_frame(const RowVector& canonical, const CanonicalFrame& frame,
                            int* clamped_joints = nullptr);

}  // namespace graspflow
