#pragma once

#include <array>
#include <vector>

#include "hmx/body/human_model.hpp"
#include "hmx/body/robot_model.hpp"
#include "hmx/numerics/matrix.hpp"

namespace hmx::retarget {

using body::RootState;
using numerics::Matrix;
using numerics::Vec3;

inline constexpr double kPoseFps = 20.0;
inline constexpr double kActionFps = 50.0;

// Per-frame parametric body state at 20 fps.
struct HumanPoseSequence {
  std::vector<double> beta;
  std::vector<std::vector<Vec3>> theta;  // frames x joints, axis-angle (rad)
  std::vector<Vec3> t_root;              // meters
  double fps = kPoseFps;

  std::size_t frames() const noexcept { return t_root.size(); }
  // Throws ValidationError / DimensionError: >= 1 frame, shapes match the
  // model, |beta_i| < 5, finite values, fps == 20.
  void validate(const body::HumanBodyModel& model) const;
};

using KeypointFrame = std::array<Vec3, body::kKeypointCount>;

struct KeypointSequence {
  std::vector<KeypointFrame> positions;  // meters
  double fps = kPoseFps;

  std::size_t frames() const noexcept { return positions.size(); }
};

struct RobotMotion {
  KeypointSequence keypoints;      // retargeting targets
  Matrix q;                        // frames x 27, radians
  std::vector<RootState> root;     // per frame
  std::vector<double> ik_residual; // per frame mean keypoint distance to FK(q), meters
  double fps = kPoseFps;

  std::size_t frames() const noexcept { return q.rows; }
};

// Target DoF positions at 50 fps.
struct ActionSequence {
  Matrix q;  // frames x dof
  double fps = kActionFps;

  std::size_t frames() const noexcept { return q.rows; }
};

}  // namespace hmx::retarget
