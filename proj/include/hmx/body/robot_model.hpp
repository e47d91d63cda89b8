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

using numerics::Mat3;
using numerics::UnitQuaternion;
using numerics::Vec3;

struct RobotLink {
  std::string name;
  int parent = -1;
  Vec3 offset = Vec3::Zero();  // meters, parent frame
  int dof = -1;                // actuated DoF rotating this link, or -1 for a fixed link
  Vec3 axis = Vec3::UnitZ();   // rotation axis in the link frame (unit)
};

struct RobotDof {
  std::string name;
  int link = -1;
  double min = 0.0;  // radians
  double max = 0.0;
  double torque_limit = 0.0;  // N*m
  double inertia = 0.0;       // kg*m^2, reflected per-DoF inertia for the plant
  double damping = 0.0;       // N*m*s/rad
  double kp = 0.0;            // N*m/rad
  double kd = 0.0;            // N*m*s/rad
  double default_q = 0.0;
};

struct FootSpec {
  int link = -1;
  Vec3 sole_offset = Vec3::Zero();  // contact point in the link frame
};

struct RootState {
  Vec3 translation = Vec3::Zero();
  UnitQuaternion orientation;
};

struct LinkFrame {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
};

struct RobotFk {
  std::array<Vec3, kKeypointCount> keypoints;
  std::vector<LinkFrame> frames;
};

enum class LimitMode { Checked, Unchecked };

// Kinematic tree with 27 revolute DoFs. Links are listed parent-first; link 0
// is the floating root (pelvis).
class RobotModel {
 public:
  RobotModel() = default;
  RobotModel(std::string name, std::vector<RobotLink> links, std::vector<RobotDof> dofs,
             std::array<int, kKeypointCount> keypoint_links, std::vector<int> leg_dofs,
             std::vector<int> upper_body_dofs, std::vector<int> ankle_roll_dofs, std::array<FootSpec, 2> feet);

  const std::string& name() const noexcept { return name_; }
  const std::vector<RobotLink>& links() const noexcept { return links_; }
  const std::vector<RobotDof>& dofs() const noexcept { return dofs_; }
  std::size_t dof_count() const noexcept { return dofs_.size(); }
  const std::array<int, kKeypointCount>& keypoint_links() const noexcept { return keypoint_links_; }
  // q^low in the deviation penalty.
  const std::vector<int>& leg_dofs() const noexcept { return leg_dofs_; }
  // The 9 DoFs tracked by the DoF imitation reward.
  const std::vector<int>& upper_body_dofs() const noexcept { return upper_body_dofs_; }
  const std::vector<int>& ankle_roll_dofs() const noexcept { return ankle_roll_dofs_; }
  const std::array<FootSpec, 2>& feet() const noexcept { return feet_; }

  std::vector<double> default_pose() const;
  // True when `ancestor` is on the path from the root to `link` (inclusive).
  bool is_ancestor(int ancestor, int link) const noexcept;
  // DoFs that move at least one keypoint and are not ankle-roll DoFs. The rest
  // are held at their default during IK.
  const std::vector<bool>& ik_active() const noexcept { return ik_active_; }
  int dof_index(std::string_view dof_name) const;
  int link_index(std::string_view link_name) const;

  // Throws ValidationError naming the first DoF outside [min, max].
  void check_limits(std::span<const double> q) const;
  void clamp_to_limits(std::span<double> q) const noexcept;

  static RobotModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;
  static RobotModel from_text(std::string_view text);

 private:
  std::string name_;
  std::vector<RobotLink> links_;
  std::vector<RobotDof> dofs_;
  std::array<int, kKeypointCount> keypoint_links_{};
  std::vector<int> leg_dofs_;
  std::vector<int> upper_body_dofs_;
  std::vector<int> ankle_roll_dofs_;
  std::array<FootSpec, 2> feet_{};
  std::vector<std::vector<bool>> ancestor_;  // ancestor_[link][a]
  std::vector<bool> ik_active_;
};

// Bundled synthetic 27-DoF humanoid in the layout of a full-size biped: two
// 6-DoF legs (hip yaw/pitch/roll, knee, ankle pitch/roll), one torso DoF and two
// 7-DoF arms (shoulder pitch/roll/yaw, elbow, wrist roll/pitch/yaw). The zero
// configuration is the T-pose. Dimensions, limits and gains are synthetic.
RobotModel default_robot_model();

RobotFk fk_robot(const RobotModel& model, std::span<const double> q, const RootState& root,
                 LimitMode mode = LimitMode::Checked);

// d(keypoints)/dq as a (12*3) x 27 matrix; row 3k+c is coordinate c of
// keypoint k.
Eigen::MatrixXd fk_jacobian(const RobotModel& model, std::span<const double> q, const RootState& root,
                            LimitMode mode = LimitMode::Checked);

// Same Jacobian reusing an existing FK evaluation.
Eigen::MatrixXd fk_jacobian(const RobotModel& model, const RobotFk& fk);

// Contact point of each foot in world coordinates.
std::array<Vec3, 2> foot_positions(const RobotModel& model, const RobotFk& fk);

}  // namespace hmx::body
