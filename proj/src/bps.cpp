#include "graspflow/bps.hpp"

#include "graspflow/binary_io.hpp"

#include <cmath>

namespace graspflow {

namespace {
constexpr std::string_view kBasisMagic = "GFBASIS1";
constexpr std::string_view kCloudMagic = "GFCLOUD1";
}  // namespace

BpsBasis make_basis(Index size, double radius, std::uint64_t seed) {
  require(size >= 8, "make_basis: at least 8 basis points required");
  require(radius > 0.0, "make_basis: radius must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  BpsBasis basis;
  basis.radius = radius;
  basis.seed = seed;
  basis.points.resize(size, 3);
  for (Index i = 0; i < size; ++i) {
    Vec3 dir;
    do {
      dir = Vec3(normal(rng), normal(rng), normal(rng));
    } while (dir.norm() < 1e-12);
    const double r = radius * std::cbrt(uniform(rng));
    basis.points.row(i) = (r * dir.normalized()).transpose();
  }
  return basis;
}

Vector bps_encode(const Points& cloud, const BpsBasis& basis) {
  require(cloud.rows() > 0, "bps_encode: empty cloud");
  require_finite(cloud, "bps_encode cloud");
  Vector out(basis.size());
  for (Index i = 0; i < basis.size(); ++i)
    out(i) = std::sqrt((cloud.rowwise() - basis.points.row(i)).rowwise().squaredNorm().minCoeff());
  return out;
}

std::string serialize_basis(const BpsBasis& basis) {
  io::Writer w;
  w.bytes(kBasisMagic);
  w.u64(static_cast<std::uint64_t>(basis.size()));
  w.u64(basis.seed);
  w.f64(basis.radius);
  w.matrix(basis.points);
  return w.take();
}

BpsBasis deserialize_basis(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kBasisMagic.size()) != kBasisMagic) throw FormatError("not a basis file (bad magic)");
  const auto n = r.u64();
  if (n < 8 || n > (1u << 24)) throw FormatError("basis size out of range");
  BpsBasis b;
  b.seed = r.u64();
  b.radius = r.f64();
  if (!(b.radius > 0.0) || !std::isfinite(b.radius)) throw FormatError("basis radius invalid");
  b.points = r.matrix(static_cast<Index>(n), 3);
  if (!b.points.allFinite() || b.points.rowwise().norm().maxCoeff() > b.radius * (1 + 1e-12))
    throw FormatError("basis points outside their ball");
  return b;
}

void save_basis(const std::string& path, const BpsBasis& basis) {
  io::write_file(path, serialize_basis(basis));
}

BpsBasis load_basis(const std::string& path) {
  const std::string bytes = io::read_file(path);
  BpsBasis b = deserialize_basis(bytes);
  if (serialize_basis(b).size() != bytes.size()) throw FormatError("trailing bytes in basis file");
  return b;
}

std::string serialize_cloud(const PointCloud& cloud) {
  io::Writer w;
  w.bytes(kCloudMagic);
  w.u64(static_cast<std::uint64_t>(cloud.size()));
  w.u64(cloud.has_normals() ? 1u : 0u);
  w.matrix(cloud.points);
  if (cloud.has_normals()) w.matrix(cloud.normals);
  return w.take();
}

PointCloud deserialize_cloud(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kCloudMagic.size()) != kCloudMagic) throw FormatError("not a cloud file (bad magic)");
  const auto n = r.u64();
  const auto flags = r.u64();
  if (n == 0 || n > (1u << 26)) throw FormatError("cloud size out of range");
  if (flags > 1) throw FormatError("unknown cloud flags");
  PointCloud c;
  c.points = r.matrix(static_cast<Index>(n), 3);
  if (flags & 1u) c.normals = r.matrix(static_cast<Index>(n), 3);
  if (r.remaining() != 0) throw FormatError("trailing bytes in cloud file");
  if (!c.points.allFinite() || !c.normals.allFinite()) throw FormatError("non-finite cloud data");
  return c;
}

void save_cloud(const std::string& path, const PointCloud& cloud) {
  io::write_file(path, serialize_cloud(cloud));
}

PointCloud load_cloud(const std::string& path) { return deserialize_cloud(io::read_file(path)); }

}  // namespace graspflow
