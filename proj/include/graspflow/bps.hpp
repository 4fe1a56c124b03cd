#pragma once

#include "graspflow/pointcloud.hpp"
#include "graspflow/types.hpp"

#include <string>

namespace graspflow {

/// Frozen set of anchor points sampled uniformly in a ball of `radius`.
struct BpsBasis {
  Points points;
  double radius = 0.15;
  std::uint64_t seed = 0;

  Index size() const { return points.rows(); }
};

inline constexpr Index kDefaultBasisSize = 1024;
inline constexpr double kDefaultBasisRadius = 0.15;

BpsBasis make_basis(Index size, double radius, std::uint64_t seed);

/// Distance from each basis point to its nearest cloud point (brute force).
Vector bps_encode(const Points& cloud, const BpsBasis& basis);
inline Vector bps_encode(const PointCloud& cloud, const BpsBasis& basis) {
  return bps_encode(cloud.points, basis);
}

// Binary layouts are documented in docs/formats.md.
std::string serialize_basis(const BpsBasis& basis);
BpsBasis deserialize_basis(std::string_view bytes);
void save_basis(const std::string& path, const BpsBasis& basis);
BpsBasis load_basis(const std::string& path);

std::string serialize_cloud(const PointCloud& cloud);
PointCloud deserialize_cloud(std::string_view bytes);
void save_cloud(const std::string& path, const PointCloud& cloud);
PointCloud load_cloud(const std::string& path);

}  // namespace graspflow
