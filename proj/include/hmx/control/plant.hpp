#pragma once

#include <array>
#include <span>
#include <vector>

#include "hmx/body/robot_model.hpp"

namespace hmx::control {

using body::RobotModel;
using body::RootState;
using numerics::Vec3;

struct PdGains {
  std::vector<double> kp;  // N*m/rad
  std::vector<double> kd;  // N*m*s/rad

  static PdGains from_robot(const RobotModel& robot);
  // Throws DimensionError / ValidationError (entries must be > 0).
  void validate(std::size_t dof_count) const;
};

struct PlantConfig {
  double dt = 0.02;           // control period, seconds
  std::size_t substeps = 4;   // integrator steps per control period
  double ground_stiffness = 1e4;   // N/m, penetration spring
  double ground_damping = 200.0;   // N*s/m, on penetration speed
  double tangential_damping = 100.0;  // N*s/m, viscous drag of a foot in contact
  double contact_force_threshold = 100.0;  // N
  double collision_radius = 0.05;  // m, keypoint pairs closer than this collide

  void validate() const;
};

struct PlantState {
  std::vector<double> q, dq;  // rad, rad/s
  RootState root;
  Vec3 root_lin_vel = Vec3::Zero();  // world frame, m/s
  Vec3 root_ang_vel = Vec3::Zero();  // body frame, rad/s
  std::array<bool, 2> feet_contact{};
  std::array<double, 2> feet_height{};          // sole z, m
  std::array<Vec3, 2> feet_velocity{Vec3::Zero(), Vec3::Zero()};
  std::array<double, 2> feet_air_time{};        // current airborne duration, s
  std::array<bool, 2> new_contact{};            // touched down during the last control step
  std::array<double, 2> landing_air_time{};     // airborne duration ended by that touchdown
  std::array<Vec3, 2> contact_forces{Vec3::Zero(), Vec3::Zero()};  // N, world
  std::vector<double> last_action;
  double time = 0.0;
};

// Root motion imposed on the plant: world-frame linear velocity and world-frame
// angular velocity held over the step.
struct RootCommand {
  Vec3 lin_vel = Vec3::Zero();
  Vec3 ang_vel = Vec3::Zero();
};

// tau = kp (a - q) - kd dq, ankle-roll targets forced to 0, then clamped to
// the torque limits.
std::vector<double> pd_torque(const RobotModel& robot, std::span<const double> action, const PlantState& state,
                              const PdGains& gains);

// State at rest in pose q: zero velocities, contacts evaluated.
PlantState make_plant_state(const RobotModel& robot, const PlantConfig& cfg, std::span<const double> q,
                            const RootState& root);

// Advances by cfg.dt with constant tau: per-DoF ddq = (tau - c dq) / I,
// semi-implicit Euler over cfg.substeps. Joint limits are not enforced.
// Throws ValidationError on non-finite tau.
PlantState step_plant(const RobotModel& robot, const PlantConfig& cfg, const PlantState& state,
                      std::span<const double> tau, const RootCommand& root = {});

// Same, with the PD torque recomputed at every substep. applied_tau (if set)
// receives the substep-averaged torque.
PlantState step_pd(const RobotModel& robot, const PlantConfig& cfg, const PdGains& gains, const PlantState& state,
                   std::span<const double> action, const RootCommand& root = {},
                   std::vector<double>* applied_tau = nullptr);

// Any pair of keypoints closer than cfg.collision_radius.
bool in_collision(const RobotModel& robot, const PlantConfig& cfg, const PlantState& state);

}  // namespace hmx::control
