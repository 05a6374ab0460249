#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vict {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// A point in the patient (world) frame, millimetres.
using WorldPoint = Vec3;

/// p' = rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  RigidTransform compose(const RigidTransform& inner) const;

  /// Throws InputError unless rotation is a proper rotation within tol.
  void validate(double tol = 1e-9) const;
};

bool is_orthonormal(const Mat3& m, double tol = 1e-9);

}  // namespace vict
