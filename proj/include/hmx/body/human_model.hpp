#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmx/body/keypoints.hpp"
#include "hmx/numerics/quaternion.hpp"

namespace hmx::body {

using numerics::Vec3;

struct HumanJoint {
  std::string name;
  int parent = -1;
  Vec3 base_offset = Vec3::Zero();  // meters, parent frame
  Eigen::MatrixXd shape_basis;      // 3 x n_beta, meters per unit beta
};

// Linear-offset parametric body: offset_j(beta) = base_j + B_j * beta. Joint
// rotations compose along the tree; joint 0 is the root and sits at t_root.
class HumanBodyModel {
 public:
  HumanBodyModel() = default;
  // Validates: single root at index 0, parents precede children, positive base
  // bone lengths, basis shapes, the 12 retargeting joints present by name.
  HumanBodyModel(std::string name, std::vector<HumanJoint> joints, int n_beta);

  const std::string& name() const noexcept { return name_; }
  const std::vector<HumanJoint>& joints() const noexcept { return joints_; }
  std::size_t joint_count() const noexcept { return joints_.size(); }
  int n_beta() const noexcept { return n_beta_; }
  // Throws ValidationError when absent.
  int index_of(std::string_view joint_name) const;
  // Joint index of each canonical keypoint.
  const std::array<int, kKeypointCount>& keypoint_joints() const noexcept { return keypoint_joints_; }

  static HumanBodyModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;
  static HumanBodyModel from_text(std::string_view text);

 private:
  std::string name_;
  std::vector<HumanJoint> joints_;
  int n_beta_ = 0;
  std::array<int, kKeypointCount> keypoint_joints_{};
};

// Bundled 21-joint model with 10 shape parameters. The first six basis
// directions are structured (global scale, leg length, arm length, shoulder
// width, hip width, torso length); the remaining four are fixed pseudo-random
// directions of 5 mm scale.
HumanBodyModel default_human_model();

// Shape parameters must satisfy |beta_i| < 5.
inline constexpr double kBetaBound = 5.0;
void check_beta(const HumanBodyModel& model, std::span<const double> beta);

// World-frame joint positions. theta holds one axis-angle vector per joint
// (radians); joint 0's rotation is the global orientation.
std::vector<Vec3> fk_human(const HumanBodyModel& model, std::span<const double> beta,
                           std::span<const Vec3> theta, const Vec3& t_root);

// Positions of the 12 keypoints only, canonical order.
std::vector<Vec3> fk_human_keypoints(const HumanBodyModel& model, std::span<const double> beta,
                                     std::span<const Vec3> theta, const Vec3& t_root);

// d(keypoint positions)/d(beta) at fixed theta: (12*3) x n_beta, row 3k+c.
// Positions are affine in beta for fixed theta, so this is exact.
Eigen::MatrixXd fk_human_keypoint_shape_jacobian(const HumanBodyModel& model,
                                                 std::span<const Vec3> theta);

}  // namespace hmx::body
