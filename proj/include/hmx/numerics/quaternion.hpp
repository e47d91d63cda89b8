#pragma once

#include <Eigen/Dense>

namespace hmx::numerics {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rotation stored as (w, x, y, z), normalized on construction.
class UnitQuaternion {
 public:
  UnitQuaternion() noexcept = default;
  // Throws NumericError for a zero or non-finite input.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() noexcept { return {}; }
  // Axis-angle vector: direction is the axis, norm is the angle in radians.
  static UnitQuaternion from_axis_angle(const Vec3& rotvec);
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  static UnitQuaternion from_yaw(double yaw);
  // Intrinsic Z-Y-X (yaw, pitch, roll).
  static UnitQuaternion from_rpy(double roll, double pitch, double yaw);

  double w() const noexcept { return w_; }
  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double z() const noexcept { return z_; }

  Mat3 to_matrix() const noexcept;
  Vec3 to_axis_angle() const noexcept;
  Vec3 rotate(const Vec3& v) const noexcept { return to_matrix() * v; }
  UnitQuaternion conjugate() const noexcept;
  // roll, pitch, yaw of the Z-Y-X decomposition.
  Vec3 rpy() const noexcept;

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);
  friend bool operator==(const UnitQuaternion&, const UnitQuaternion&) = default;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

Mat3 quat_to_matrix(const UnitQuaternion& q) noexcept;

// Wrap into (-pi, pi].
double wrap_angle(double a) noexcept;

}  // namespace hmx::numerics
