#include "hmx/numerics/quaternion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hmx/error.hpp"

namespace hmx::numerics {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) throw NumericError("quaternion: zero or non-finite norm");
  w_ = w / n;
  x_ = x / n;
  y_ = y / n;
  z_ = z / n;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    // First-order expansion keeps tiny rotations exact to rounding.
    return UnitQuaternion(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
  }
  return from_axis_angle(rotvec / angle, angle);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  const double s = std::sin(0.5 * angle) / n;
  return UnitQuaternion(std::cos(0.5 * angle), axis.x() * s, axis.y() * s, axis.z() * s);
}

UnitQuaternion UnitQuaternion::from_yaw(double yaw) {
  return UnitQuaternion(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

UnitQuaternion UnitQuaternion::from_rpy(double roll, double pitch, double yaw) {
  return from_yaw(yaw) * from_axis_angle(Vec3::UnitY(), pitch) * from_axis_angle(Vec3::UnitX(), roll);
}

Mat3 UnitQuaternion::to_matrix() const noexcept {
  const double w = w_, x = x_, y = y_, z = z_;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec3 UnitQuaternion::to_axis_angle() const noexcept {
  double w = w_;
  Vec3 v(x_, y_, z_);
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(s, w);
  return v * (angle / s);
}

UnitQuaternion UnitQuaternion::conjugate() const noexcept {
  UnitQuaternion q;
  q.w_ = w_;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  return q;
}

Vec3 UnitQuaternion::rpy() const noexcept {
  const double w = w_, x = x_, y = y_, z = z_;
  const double roll = std::atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
  const double sp = std::clamp(2 * (w * y - z * x), -1.0, 1.0);
  const double pitch = std::asin(sp);
  const double yaw = std::atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
  return {roll, pitch, yaw};
}

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion(a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
                        a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
                        a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
                        a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_);
}

Mat3 quat_to_matrix(const UnitQuaternion& q) noexcept { return q.to_matrix(); }

double wrap_angle(double a) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  else if (r > std::numbers::pi) r -= two_pi;
  return r;
}

}  // namespace hmx::numerics
