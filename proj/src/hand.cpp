#include "graspflow/datasetgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace graspflow {

HandModel HandModel::defaults() {
  HandModel h;
  h.fingers[0] = {Vec3(0.0, -0.04, 0.0), 1.0};
  const double xs[4] = {-0.03, -0.01, 0.01, 0.03};
  for (int k = 0; k < 4; ++k) h.fingers[k + 1] = {Vec3(xs[k], 0.035, 0.0), -1.0};
  return h;
}

std::array<HandModel::Sphere, 3> HandModel::finger_spheres(int f, double abduction, double flex1,
                                                           double flex2) const {
  const Finger& fg = fingers[static_cast<std::size_t>(f)];
  const Vec3 close(0.0, fg.closing_sign, 0.0);
  // Abduction swings the finger's flexion plane about the closing axis.
  const Vec3 reach(std::sin(abduction), 0.0, std::cos(abduction));
  const Vec3 d1 = std::cos(flex1) * reach + std::sin(flex1) * close;
  const Vec3 d2 = std::cos(flex1 + flex2) * reach + std::sin(flex1 + flex2) * close;
  const Vec3 knuckle = fg.base + proximal_length * d1;
  return {Sphere{fg.base + 0.5 * proximal_length * d1, link_radius}, Sphere{knuckle, link_radius},
          Sphere{knuckle + distal_length * d2, tip_radius}};
}

std::string to_string(LabelReason r) {
  switch (r) {
    case LabelReason::ok: return "ok";
    case LabelReason::collision: return "collision";
    case LabelReason::no_contact: return "no_contact";
    case LabelReason::unreachable_closure: return "unreachable_closure";
  }
  return "unknown";
}

LabelReason parse_reason(const std::string& s) {
  for (auto r : {LabelReason::ok, LabelReason::collision, LabelReason::no_contact,
                 LabelReason::unreachable_closure})
    if (to_string(r) == s) return r;
  throw DataError("unknown label reason '" + s + "'");
}

namespace {

bool palm_collides(const ShapeSpec& shape, const GraspConfig& g, const HandModel& hand, double tol) {
  constexpr int nx = 7, ny = 7, nz = 3;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        const Vec3 f(2.0 * i / (nx - 1) - 1.0, 2.0 * j / (ny - 1) - 1.0, 2.0 * k / (nz - 1) - 1.0);
        const Vec3 local = hand.palm_center + hand.palm_half_extent.cwiseProduct(f);
        if (signed_distance(shape, g.rotation * local + g.translation) < -tol) return true;
      }
  return false;
}

}  // namespace

GraspLabel label_grasp(const ShapeSpec& shape, const GraspConfig& g, const HandModel& hand,
                       const LabelConfig& cfg) {
  shape.validate();
  const JointLimits limits = JointLimits::defaults();
  auto world = [&](const Vec3& p) -> Vec3 { return g.rotation * p + g.translation; };
  auto gap = [&](const HandModel::Sphere& s) { return signed_distance(shape, world(s.center)) - s.radius; };

  GraspLabel label;
  if (palm_collides(shape, g, hand, cfg.penetration_tolerance)) {
    label.reason = LabelReason::collision;
    return label;
  }
  for (int f = 0; f < 5; ++f) {
    const auto spheres = hand.finger_spheres(f, g.joints(3 * f), g.joints(3 * f + 1), g.joints(3 * f + 2));
    for (const auto& s : spheres)
      if (gap(s) < -cfg.penetration_tolerance) {
        label.reason = LabelReason::collision;
        return label;
      }
  }

  double nearest_tip = std::numeric_limits<double>::infinity();
  for (int f = 0; f < 5; ++f) {
    const double abd = g.joints(3 * f);
    double q1 = g.joints(3 * f + 1), q2 = g.joints(3 * f + 2);
    const double hi1 = limits.upper(3 * f + 1), hi2 = limits.upper(3 * f + 2);
    for (;;) {
      const auto s = hand.finger_spheres(f, abd, q1, q2);
      const double tip_gap = gap(s[2]);
      nearest_tip = std::min(nearest_tip, std::abs(tip_gap));
      if (tip_gap <= cfg.contact_tolerance) {
        const Vec3 p = world(s[2].center);
        label.contacts.push_back(Contact{f, p, surface_normal(shape, p)});
        break;
      }
      // A link touching first blocks the finger without a fingertip contact.
      if (gap(s[0]) <= cfg.contact_tolerance || gap(s[1]) <= cfg.contact_tolerance) break;
      if (q1 >= hi1 && q2 >= hi2) break;
      q1 = std::min(q1 + cfg.closure_step, hi1);
      q2 = std::min(q2 + cfg.closure_step, hi2);
    }
  }

  for (std::size_t i = 0; i < label.contacts.size(); ++i)
    for (std::size_t j = i + 1; j < label.contacts.size(); ++j)
      if (label.contacts[i].normal.dot(label.contacts[j].normal) < cfg.opposition) {
        label.feasible = true;
        label.reason = LabelReason::ok;
        return label;
      }
  label.reason = label.contacts.empty() && nearest_tip > cfg.miss_distance ? LabelReason::no_contact
                                                                          : LabelReason::unreachable_closure;
  return label;
}

namespace {

// Palm frame with z along `approach` and the x axis rolled by `roll`.
Mat3 frame_from_approach(const Vec3& approach, double roll) {
  const Vec3 z = approach.normalized();
  Vec3 helper = Vec3::UnitX();
  if (std::abs(z.x()) > 0.9) helper = Vec3::UnitY();
  const Vec3 u = z.cross(helper).normalized();
  const Vec3 x = std::cos(roll) * u + std::sin(roll) * z.cross(u);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return r;
}

Joints preshape(int which) {
  Joints j = Joints::Zero();
  switch (which) {
    case 0:  // wide open
      for (int f = 0; f < 5; ++f) j.segment<3>(3 * f) << 0.0, -0.45, 0.1;
      break;
    case 1:  // half open
      for (int f = 0; f < 5; ++f) j.segment<3>(3 * f) << 0.0, -0.2, 0.2;
      break;
    default: {  // spread
      const double spread[5] = {0.0, -0.15, -0.05, 0.05, 0.15};
      for (int f = 0; f < 5; ++f) j.segment<3>(3 * f) << spread[f], -0.3, 0.1;
    }
  }
  return j;
}

}  // namespace

std::vector<GraspConfig> propose_grasps(const PointCloud& cloud, Index n, Rng& rng) {
  require(cloud.has_normals(), "propose_grasps: normals required");
  require(cloud.size() > 0 && n >= 0, "propose_grasps: empty cloud or negative count");
  const JointLimits limits = JointLimits::defaults();
  std::uniform_int_distribution<Index> pick(0, cloud.size() - 1);
  std::uniform_int_distribution<int> which(0, 2);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::vector<GraspConfig> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Index i = pick(rng);
    const Vec3 p = cloud.points.row(i).transpose();
    const Vec3 normal = cloud.normals.row(i).transpose().normalized();
    const double standoff = uniform(rng, 0.02, 0.06);
    const double roll = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    GraspConfig g;
    g.rotation = frame_from_approach(-normal, roll);
    g.translation = p + standoff * normal;
    g.joints = preshape(which(rng));
    for (Index j = 0; j < kJointCount; ++j)
      g.joints(j) = std::clamp(g.joints(j) + jitter(rng), limits.lower(j), limits.upper(j));
    out.push_back(g);
  }
  return out;
}

}  // namespace graspflow
