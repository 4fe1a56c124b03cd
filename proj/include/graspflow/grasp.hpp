#pragma once

#include "graspflow/types.hpp"

#include <array>

namespace graspflow {

inline constexpr Index kJointCount = 15;
inline constexpr Index kGraspDim = 3 + 6 + kJointCount;

using Joints = Eigen::Matrix<double, kJointCount, 1>;

/// Five fingers, each with (abduction, proximal flex, distal flex), thumb first.
struct JointLimits {
  Joints lower;
  Joints upper;

  static JointLimits defaults();
};

/// Palm pose and finger joints. The palm z-axis is the approach direction and
/// `translation` is the palm origin, both in whatever frame the caller works in.
struct GraspConfig {
  Vec3 translation = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Joints joints = Joints::Zero();

  Vec3 approach() const { return rotation.col(2); }
};

/// Flat layout: [t (3), first rotation column (3), second rotation column (3), joints (15)].
RowVector encode_grasp(const GraspConfig& g);

struct DecodedGrasp {
  GraspConfig grasp;
  int clamped_joints = 0;  // joints pulled back inside the limits
};

/// Inverse of `encode_grasp` for arbitrary vectors: the two rotation columns are
/// Gram-Schmidt orthonormalized and the joints are clamped to `limits`.
DecodedGrasp decode_grasp(const Eigen::Ref<const RowVector>& v,
                          const JointLimits& limits = JointLimits::defaults());

/// Rotation whose first two columns follow `a` and `b` after Gram-Schmidt.
Mat3 rotation_from_columns(const Vec3& a, const Vec3& b);

}  // namespace graspflow
