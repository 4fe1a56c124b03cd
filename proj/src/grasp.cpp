#include "graspflow/grasp.hpp"

#include <algorithm>

namespace graspflow {

JointLimits JointLimits::defaults() {
  JointLimits l;
  for (Index f = 0; f < 5; ++f) {
    l.lower.segment<3>(3 * f) << -0.35, -0.6, 0.0;
    l.upper.segment<3>(3 * f) << 0.35, 1.6, 1.6;
  }
  return l;
}

RowVector encode_grasp(const GraspConfig& g) {
  RowVector v(kGraspDim);
  v.segment<3>(0) = g.translation.transpose();
  v.segment<3>(3) = g.rotation.col(0).transpose();
  v.segment<3>(6) = g.rotation.col(1).transpose();
  v.segment<kJointCount>(9) = g.joints.transpose();
  return v;
}

Mat3 rotation_from_columns(const Vec3& a, const Vec3& b) {
  const double an = a.norm();
  if (!(an > 1e-12)) throw NumericError("rotation decode", "degenerate first column");
  const Vec3 x = a / an;
  Vec3 y = b - x.dot(b) * x;
  const double yn = y.norm();
  if (!(yn > 1e-12)) throw NumericError("rotation decode", "rotation columns are parallel");
  y /= yn;
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = x.cross(y);
  return r;
}

DecodedGrasp decode_grasp(const Eigen::Ref<const RowVector>& v, const JointLimits& limits) {
  require(v.size() == kGraspDim, "decode_grasp: expected a 24-element vector");
  require_finite(v, "decode_grasp");
  DecodedGrasp out;
  out.grasp.translation = v.segment<3>(0).transpose();
  out.grasp.rotation = rotation_from_columns(v.segment<3>(3).transpose(), v.segment<3>(6).transpose());
  for (Index i = 0; i < kJointCount; ++i) {
    const double j = v(9 + i);
    const double c = std::clamp(j, limits.lower(i), limits.upper(i));
    if (c != j) ++out.clamped_joints;
    out.grasp.joints(i) = c;
  }
  return out;
}

}  // namespace graspflow
