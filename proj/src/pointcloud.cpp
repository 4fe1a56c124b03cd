#include "graspflow/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace graspflow {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::box: return "box";
    case ShapeFamily::cylinder: return "cylinder";
    case ShapeFamily::sphere: return "sphere";
    case ShapeFamily::capsule: return "capsule";
    case ShapeFamily::lshape: return "lshape";
  }
  return "unknown";
}

ShapeFamily parse_family(const std::string& name) {
  for (auto f : {ShapeFamily::box, ShapeFamily::cylinder, ShapeFamily::sphere,
                 ShapeFamily::capsule, ShapeFamily::lshape})
    if (to_string(f) == name) return f;
  throw DataError("unsupported shape family '" + name + "'");
}

void ShapeSpec::validate() const {
  require(samples >= 256, "ShapeSpec: at least 256 surface samples required");
  int used = 1;
  switch (family) {
    case ShapeFamily::box:
    case ShapeFamily::lshape: used = 3; break;
    case ShapeFamily::cylinder:
    case ShapeFamily::capsule: used = 2; break;
    case ShapeFamily::sphere: used = 1; break;
  }
  for (int i = 0; i < used; ++i) require(dims[i] > 0.0, "ShapeSpec: sizes must be positive");
  if (family == ShapeFamily::lshape)
    require(dims[1] < dims[0], "ShapeSpec: L-shape arm width must be below arm length");
  const double orth = (pose.rotation.transpose() * pose.rotation - Mat3::Identity()).norm();
  require(orth < 1e-9 && pose.rotation.determinant() > 0.0, "ShapeSpec: pose is not a rotation");
}

namespace {

struct Box {
  Vec3 lo, hi;
  double area() const {
    const Vec3 e = hi - lo;
    return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
  }
  bool strictly_inside(const Vec3& p) const {
    return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
  }
};

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Uniform point on a box surface with its face normal.
void sample_box(const Box& b, Rng& rng, Vec3& p, Vec3& n) {
  const Vec3 e = b.hi - b.lo;
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  double pick = uniform(rng, 0.0, 2.0 * (areas[0] + areas[1] + areas[2]));
  int axis = 0;
  for (; axis < 2; ++axis) {
    if (pick < 2.0 * areas[axis]) break;
    pick -= 2.0 * areas[axis];
  }
  const bool high = uniform(rng) < 0.5;
  for (int k = 0; k < 3; ++k) p[k] = uniform(rng, b.lo[k], b.hi[k]);
  p[axis] = high ? b.hi[axis] : b.lo[axis];
  n = Vec3::Zero();
  n[axis] = high ? 1.0 : -1.0;
}

Vec3 unit_sphere(Rng& rng) {
  std::normal_distribution<double> normal;
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

// Round side of a z-axis cylinder of given radius and z range.
void sample_tube(double r, double z0, double z1, Rng& rng, Vec3& p, Vec3& n) {
  const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  n = Vec3(std::cos(theta), std::sin(theta), 0.0);
  p = Vec3(r * n.x(), r * n.y(), uniform(rng, z0, z1));
}

void sample_disc(double r, double z, double nz, Rng& rng, Vec3& p, Vec3& n) {
  const double rho = r * std::sqrt(uniform(rng));
  const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  p = Vec3(rho * std::cos(theta), rho * std::sin(theta), z);
  n = Vec3(0.0, 0.0, nz);
}

// The two non-overlapping boxes used for sampling an L-shape, in local coordinates.
std::array<Box, 2> lshape_parts(const std::array<double, 3>& d) {
  const double len = d[0], w = d[1], h = d[2], off = len / 2.0;
  Box a{Vec3(-off, -off, -h / 2), Vec3(len - off, w - off, h / 2)};
  Box b{Vec3(-off, w - off, -h / 2), Vec3(w - off, len - off, h / 2)};
  return {a, b};
}

void sample_local(const ShapeSpec& s, Rng& rng, Vec3& p, Vec3& n) {
  const auto& d = s.dims;
  switch (s.family) {
    case ShapeFamily::box: {
      const Vec3 half(d[0] / 2, d[1] / 2, d[2] / 2);
      sample_box(Box{-half, half}, rng, p, n);
      return;
    }
    case ShapeFamily::sphere:
      n = unit_sphere(rng);
      p = d[0] * n;
      return;
    case ShapeFamily::cylinder: {
      const double r = d[0], h = d[1];
      const double side = 2.0 * std::numbers::pi * r * h, cap = std::numbers::pi * r * r;
      const double pick = uniform(rng, 0.0, side + 2.0 * cap);
      if (pick < side)
        sample_tube(r, -h / 2, h / 2, rng, p, n);
      else if (pick < side + cap)
        sample_disc(r, h / 2, 1.0, rng, p, n);
      else
        sample_disc(r, -h / 2, -1.0, rng, p, n);
      return;
    }
    case ShapeFamily::capsule: {
      const double r = d[0], h = d[1];
      const double side = 2.0 * std::numbers::pi * r * h, ball = 4.0 * std::numbers::pi * r * r;
      if (uniform(rng, 0.0, side + ball) < side) {
        sample_tube(r, -h / 2, h / 2, rng, p, n);
      } else {
        n = unit_sphere(rng);
        p = r * n + Vec3(0.0, 0.0, n.z() >= 0.0 ? h / 2 : -h / 2);
      }
      return;
    }
    case ShapeFamily::lshape: {
      const auto parts = lshape_parts(d);
      const double wa = parts[0].area(), wb = parts[1].area();
      for (;;) {
        const int i = uniform(rng, 0.0, wa + wb) < wa ? 0 : 1;
        sample_box(parts[i], rng, p, n);
        // Faces shared between the two parts are interior to the union.
        if (!parts[1 - i].strictly_inside(p + 1e-9 * n)) return;
      }
    }
  }
  throw DataError("unsupported shape family");
}

double local_sdf(const ShapeSpec& s, const Vec3& p) {
  const auto& d = s.dims;
  switch (s.family) {
    case ShapeFamily::box: return box_sdf(p, Vec3::Zero(), Vec3(d[0] / 2, d[1] / 2, d[2] / 2));
    case ShapeFamily::sphere: return p.norm() - d[0];
    case ShapeFamily::cylinder: {
      const double dr = std::hypot(p.x(), p.y()) - d[0];
      const double dz = std::abs(p.z()) - d[1] / 2;
      return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    }
    case ShapeFamily::capsule: {
      const double z = std::clamp(p.z(), -d[1] / 2, d[1] / 2);
      return (p - Vec3(0.0, 0.0, z)).norm() - d[0];
    }
    case ShapeFamily::lshape: {
      // Union of the two overlapping arms.
      const double len = d[0], w = d[1], h = d[2], off = len / 2.0;
      const double a = box_sdf(p, Vec3(len / 2 - off, w / 2 - off, 0.0), Vec3(len / 2, w / 2, h / 2));
      const double b = box_sdf(p, Vec3(w / 2 - off, len / 2 - off, 0.0), Vec3(w / 2, len / 2, h / 2));
      return std::min(a, b);
    }
  }
  throw DataError("unsupported shape family");
}

}  // namespace

PointCloud sample_shape(const ShapeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.resize(spec.samples, 3);
  cloud.normals.resize(spec.samples, 3);
  for (int i = 0; i < spec.samples; ++i) {
    Vec3 p, n;
    sample_local(spec, rng, p, n);
    cloud.points.row(i) = (spec.pose.rotation * p + spec.pose.translation).transpose();
    cloud.normals.row(i) = (spec.pose.rotation * n).transpose();
  }
  return cloud;
}

double signed_distance(const ShapeSpec& spec, const Vec3& p) {
  return local_sdf(spec, spec.pose.rotation.transpose() * (p - spec.pose.translation));
}

Vec3 surface_normal(const ShapeSpec& spec, const Vec3& p) {
  const double h = 1e-6;
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    g[k] = signed_distance(spec, p + e) - signed_distance(spec, p - e);
  }
  const double norm = g.norm();
  return norm > 0.0 ? Vec3(g / norm) : Vec3::UnitZ();
}

PointCloud partial_view(const PointCloud& cloud, const Vec3& view_dir) {
  require(cloud.has_normals(), "partial_view: normals required");
  require(std::abs(view_dir.norm() - 1.0) < 1e-6, "partial_view: view_dir must be a unit vector");
  std::vector<Index> keep;
  for (Index i = 0; i < cloud.size(); ++i)
    if (cloud.normals.row(i).dot(view_dir.transpose()) < 0.0) keep.push_back(i);
  if (keep.empty()) throw DataError("partial_view: no surface faces the camera");
  PointCloud out;
  out.points.resize(static_cast<Index>(keep.size()), 3);
  out.normals.resize(static_cast<Index>(keep.size()), 3);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.points.row(k) = cloud.points.row(keep[k]);
    out.normals.row(k) = cloud.normals.row(keep[k]);
  }
  return out;
}

PointCloud permute(const PointCloud& cloud, std::uint64_t seed) {
  std::vector<Index> order(cloud.size());
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  PointCloud out;
  out.points.resize(cloud.size(), 3);
  if (cloud.has_normals()) out.normals.resize(cloud.size(), 3);
  for (Index i = 0; i < cloud.size(); ++i) {
    out.points.row(i) = cloud.points.row(order[i]);
    if (cloud.has_normals()) out.normals.row(i) = cloud.normals.row(order[i]);
  }
  return out;
}

CanonicalFrame canonical_frame(const PointCloud& cloud, double radius) {
  require(cloud.size() > 0, "canonical_frame: empty cloud");
  require(radius > 0.0, "canonical_frame: radius must be positive");
  CanonicalFrame f;
  f.centroid = cloud.points.colwise().mean().transpose();
  const double max_norm = (cloud.points.rowwise() - f.centroid.transpose()).rowwise().norm().maxCoeff();
  f.scale = max_norm > radius ? radius / max_norm : 1.0;
  return f;
}

PointCloud to_canonical(const PointCloud& cloud, const CanonicalFrame& frame) {
  PointCloud out;
  out.points = (cloud.points.rowwise() - frame.centroid.transpose()) * frame.scale;
  out.normals = cloud.normals;
  return out;
}

}  // namespace graspflow
