#pragma once

#include "graspflow/types.hpp"

#include <array>
#include <string>

namespace graspflow {

enum class ShapeFamily { box, cylinder, sphere, capsule, lshape };

std::string to_string(ShapeFamily f);
ShapeFamily parse_family(const std::string& name);

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Analytic desk-scale object. `dims` are in meters and depend on the family:
///   box      (x extent, y extent, z extent)
///   cylinder (radius, height, unused), axis along local z
///   sphere   (radius, unused, unused)
///   capsule  (radius, straight segment length, unused), axis along local z
///   lshape   (arm length, arm width, height); two arms in the xy plane
struct ShapeSpec {
  ShapeFamily family = ShapeFamily::box;
  std::array<double, 3> dims{0.05, 0.05, 0.05};
  Pose pose;
  int samples = 2048;

  void validate() const;
};

/// Points (N x 3, meters) with optional unit normals (N x 3 or empty).
struct PointCloud {
  Points points;
  Points normals;

  Index size() const { return points.rows(); }
  bool has_normals() const { return normals.rows() > 0; }
};

/// Area-uniform surface samples with outward normals; deterministic per seed.
PointCloud sample_shape(const ShapeSpec& spec, std::uint64_t seed);

/// Signed distance from a world-frame point to the shape surface (negative inside).
/// Exact outside the surface; for the L-shape the interior value is a bound.
double signed_distance(const ShapeSpec& spec, const Vec3& p);
/// Outward surface normal direction at (or near) `p`, from the distance gradient.
Vec3 surface_normal(const ShapeSpec& spec, const Vec3& p);

/// Keep the points whose normals face a camera looking along `view_dir`
/// (normal . view_dir < 0). Throws DataError if nothing is visible.
PointCloud partial_view(const PointCloud& cloud, const Vec3& view_dir);

PointCloud permute(const PointCloud& cloud, std::uint64_t seed);

/// Similarity transform into the frame used for encoding: centered on the cloud
/// centroid, uniformly shrunk into a ball of the basis radius when it sticks out.
struct CanonicalFrame {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;

  Vec3 to_canonical(const Vec3& p) const { return (p - centroid) * scale; }
  Vec3 to_object(const Vec3& q) const { return q / scale + centroid; }
};

CanonicalFrame canonical_frame(const PointCloud& cloud, double radius);
PointCloud to_canonical(const PointCloud& cloud, const CanonicalFrame& frame);

}  // namespace graspflow
