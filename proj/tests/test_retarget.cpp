#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "hmx/error.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/retarget/retarget.hpp"

using namespace hmx::retarget;
using hmx::body::default_human_model;
using hmx::body::default_robot_model;
using hmx::body::fk_human_keypoints;
using hmx::body::fk_robot;
using hmx::numerics::Prng;
using hmx::numerics::UnitQuaternion;

namespace {

std::vector<Vec3> tpose_theta(const hmx::body::HumanBodyModel& h) { return std::vector<Vec3>(h.joint_count(), Vec3::Zero()); }

KeypointSequence single_frame(const std::array<Vec3, 12>& kp) {
  KeypointSequence s;
  s.positions.push_back(kp);
  return s;
}

}  // namespace

TEST_CASE("fit_shape recovers beta = 0 from the model's own T-pose") {
  const auto human = default_human_model();
  const std::vector<double> zero(10, 0.0);
  const auto target = fk_human_keypoints(human, zero, tpose_theta(human), Vec3::Zero());
  const auto r = fit_shape(human, target);
  CHECK(r.final_loss < 1e-6);
  for (double b : r.beta_opt) CHECK(std::fabs(b) < 1e-6);
  CHECK(r.converged);
}

TEST_CASE("fit_shape self-consistency at a known beta") {
  const auto human = default_human_model();
  Prng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> beta0(10);
    for (double& b : beta0) b = rng.uniform(-3.0, 3.0);
    const auto target = fk_human_keypoints(human, beta0, tpose_theta(human), Vec3::Zero());
    const auto r = fit_shape(human, target);
    const auto fitted = fk_human_keypoints(human, r.beta_opt, tpose_theta(human), Vec3::Zero());
    double worst = 0.0;
    for (std::size_t k = 0; k < 12; ++k) worst = std::max(worst, (fitted[k] - target[k]).norm());
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("fit_shape saturates at the bound for an unreachable target") {
  const auto human = default_human_model();
  auto target = robot_tpose_keypoints(default_robot_model());
  for (Vec3& p : target) p *= 3.0;
  const auto r = fit_shape(human, target);
  CHECK(r.final_loss > 0.0);
  bool saturated = false;
  for (double b : r.beta_opt) {
    CHECK(std::fabs(b) < 5.0);
    if (std::fabs(b) >= 5.0 - 1e-6 - 1e-12) saturated = true;
  }
  CHECK(saturated);
  CHECK(r.beta_opt[0] == 5.0 - 1e-6);
}

TEST_CASE("fit_shape rejects bad targets") {
  const auto human = default_human_model();
  std::vector<Vec3> few(3, Vec3::Zero());
  CHECK_THROWS_AS(fit_shape(human, few), hmx::DimensionError);
  auto target = robot_tpose_keypoints(default_robot_model());
  target[4].x() = std::nan("");
  CHECK_THROWS_AS(fit_shape(human, target), hmx::ValidationError);
}

TEST_CASE("extract_keypoints: T-pose composition, constant pose, translation ramp") {
  const auto human = default_human_model();
  const auto robot = default_robot_model();
  const auto tpose = robot_tpose_keypoints(robot);
  const auto fit = fit_shape(human, tpose);

  HumanPoseSequence one;
  one.beta.assign(10, 0.0);
  one.theta = {tpose_theta(human)};
  one.t_root = {Vec3::Zero()};
  const auto kp = extract_keypoints(human, one, fit.beta_opt);
  double err2 = 0.0;
  for (std::size_t k = 0; k < 12; ++k) err2 += (kp.positions[0][k] - tpose[k]).squaredNorm();
  CHECK(std::sqrt(err2) <= fit.final_loss + 1e-12);

  auto walk = synthetic_walk(human, 1, 1.0, 0.0, 3);
  HumanPoseSequence constant = walk;
  constant.theta.assign(10, walk.theta[0]);
  constant.t_root.assign(10, walk.t_root[0]);
  const auto ck = extract_keypoints(human, constant, fit.beta_opt);
  REQUIRE(ck.frames() == 10);
  for (std::size_t f = 1; f < 10; ++f) CHECK(ck.positions[f] == ck.positions[0]);

  HumanPoseSequence ramp = constant;
  for (std::size_t f = 0; f < 10; ++f) ramp.t_root[f] = walk.t_root[0] + Vec3(f / 9.0, 0.0, 0.0);
  const auto rk = extract_keypoints(human, ramp, fit.beta_opt);
  const auto centroid_x = [](const KeypointFrame& fr) {
    double s = 0.0;
    for (const Vec3& p : fr) s += p.x();
    return s / 12.0;
  };
  for (std::size_t f = 0; f < 10; ++f)
    CHECK(centroid_x(rk.positions[f]) - centroid_x(rk.positions[0]) == doctest::Approx(f / 9.0).epsilon(1e-12));
}

TEST_CASE("root heading follows horizontal velocity with a low-speed hold") {
  std::vector<Vec3> t;
  for (int i = 0; i < 5; ++i) t.emplace_back(0.0, 0.05 * i, 0.9);  // 1 m/s along +y
  for (int i = 0; i < 5; ++i) t.push_back(t.back());              // stop
  const auto roots = estimate_root_states(t, 20.0);
  REQUIRE(roots.size() == 10);
  CHECK(roots[0].orientation.rpy().z() == doctest::Approx(std::numbers::pi / 2));
  CHECK(roots[9].orientation.rpy().z() == doctest::Approx(std::numbers::pi / 2));
  CHECK(roots[9].orientation.rpy().x() == doctest::Approx(0.0));
  CHECK(roots[9].translation == t[9]);

  const std::vector<Vec3> still(3, Vec3(1, 2, 3));
  for (const auto& r : estimate_root_states(still, 20.0)) CHECK(r.orientation == UnitQuaternion::identity());
}

TEST_CASE("solve_ik round trip on random in-limit configurations") {
  const auto robot = default_robot_model();
  const auto& active = robot.ik_active();
  Prng rng(2024);
  IkConfig cfg;
  double worst_res = 0.0, worst_mae = 0.0, sum_res = 0.0, sum_mae = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto q = robot.default_pose();
    for (std::size_t d = 0; d < q.size(); ++d)
      if (active[d]) q[d] = rng.uniform(robot.dofs()[d].min, robot.dofs()[d].max);
    const RootState root{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.9),
                         UnitQuaternion::from_yaw(rng.uniform(-3.0, 3.0))};
    const auto fk = fk_robot(robot, q, root);
    const std::vector<RootState> roots{root};
    const auto r = solve_ik(single_frame(fk.keypoints), robot, cfg, roots);
    double mae = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) mae += std::fabs(r.q(0, d) - q[d]);
    mae /= static_cast<double>(q.size());
    worst_mae = std::max(worst_mae, mae);
    worst_res = std::max(worst_res, r.residuals[0]);
    sum_mae += mae;
    sum_res += r.residuals[0];
  }
  MESSAGE("worst residual " << worst_res << " m, worst mae " << worst_mae << " rad");
  CHECK(cfg.lambda_smooth == 0.05);
  CHECK(sum_res / 50.0 < 5e-3);
  CHECK(sum_mae / 50.0 < 0.05);
}

TEST_CASE("smoothing term vanishes on constant sequences") {
  Matrix q(7, 27);
  Prng rng(5);
  for (std::size_t d = 0; d < 27; ++d) {
    const double v = rng.uniform(-1.0, 1.0);
    for (std::size_t f = 0; f < 7; ++f) q(f, d) = v;
  }
  CHECK(smoothing_loss(q) == 0.0);
  q(3, 2) += 0.1;
  CHECK(smoothing_loss(q) == doctest::Approx(0.4));  // |0.2| + |-0.1| + |-0.1|
}

TEST_CASE("solve_ik on constant targets yields a constant trajectory") {
  const auto robot = default_robot_model();
  auto q0 = robot.default_pose();
  q0[robot.dof_index("left_knee")] = 0.5;
  q0[robot.dof_index("right_elbow")] = 1.0;
  const RootState root{Vec3(0, 0, 0.9), UnitQuaternion::identity()};
  const auto fk = fk_robot(robot, q0, root);
  KeypointSequence kp;
  kp.positions.assign(6, fk.keypoints);
  const std::vector<RootState> roots(6, root);
  const auto r = solve_ik(kp, robot, IkConfig{}, roots);
  CHECK(smoothing_loss(r.q) < 1e-6);
  for (double res : r.residuals) CHECK(res < 5e-3);
}

TEST_CASE("solve_ik loss is non-increasing across 50-iteration windows") {
  const auto human = default_human_model();
  const auto robot = default_robot_model();
  const auto walk = synthetic_walk(human, 16, 1.0, 0.2, 9);
  const auto fit = fit_shape(human, robot_tpose_keypoints(robot));
  const auto kp = extract_keypoints(human, walk, fit.beta_opt);
  const auto roots = estimate_root_states(walk.t_root, walk.fps);
  IkConfig cfg;
  cfg.convergence_tol = 0.0;
  const auto r = solve_ik(kp, robot, cfg, roots);
  REQUIRE(r.loss_history.size() >= 100);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w + 50 <= r.loss_history.size(); w += 50) {
    double mean = 0.0;
    for (std::size_t i = w; i < w + 50; ++i) mean += r.loss_history[i];
    mean /= 50.0;
    CHECK(mean <= prev);
    prev = mean;
  }
  for (std::size_t f = 0; f < r.q.rows; ++f) CHECK_NOTHROW(robot.check_limits(r.q.row(f)));
  CHECK(r.q(0, robot.dof_index("left_ankle_roll")) == 0.0);
  CHECK(r.q(0, robot.dof_index("right_ankle_roll")) == 0.0);
}

TEST_CASE("solve_ik input errors") {
  const auto robot = default_robot_model();
  KeypointSequence empty;
  CHECK_THROWS_AS(solve_ik(empty, robot, IkConfig{}, {}), hmx::ValidationError);
  KeypointSequence one;
  one.positions.resize(1);
  for (Vec3& p : one.positions[0]) p.setZero();
  const std::vector<RootState> two(2);
  CHECK_THROWS_AS(solve_ik(one, robot, IkConfig{}, two), hmx::DimensionError);
  IkConfig bad;
  bad.lambda_smooth = -1.0;
  CHECK_THROWS_AS(solve_ik(one, robot, bad, std::vector<RootState>(1)), hmx::ValidationError);
  one.positions[0][3].y() = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_ik(one, robot, IkConfig{}, std::vector<RootState>(1)), hmx::ValidationError);
}

TEST_CASE("retarget_sequence on a 64-frame walk") {
  const auto human = default_human_model();
  const auto robot = default_robot_model();
  const auto walk = synthetic_walk(human, 64, 1.1, 0.1, 1);
  const auto a = retarget_sequence(human, walk, robot);
  const auto b = retarget_sequence(human, walk, robot);
  REQUIRE(a.motion.frames() == 64);
  CHECK(a.motion.fps == 20.0);
  CHECK(a.motion.root.size() == 64);
  CHECK(a.motion.q == b.motion.q);
  CHECK(a.motion.ik_residual == b.motion.ik_residual);
  double mean_l1 = a.loss.retarget / (64.0 * 36.0);
  MESSAGE("mean keypoint L1 per coordinate " << mean_l1 << " m");
  CHECK(mean_l1 < 0.02);
  for (std::size_t f = 0; f < 64; ++f) {
    const auto fk = fk_robot(robot, a.motion.q.row(f), a.motion.root[f]);
    double dist = 0.0;
    for (std::size_t k = 0; k < 12; ++k) dist += (fk.keypoints[k] - a.motion.keypoints.positions[f][k]).norm();
    CHECK(dist / 12.0 == doctest::Approx(a.motion.ik_residual[f]).epsilon(1e-12));
  }
}

TEST_CASE("pose validation") {
  const auto human = default_human_model();
  auto walk = synthetic_walk(human, 4, 1.0, 0.0, 2);
  CHECK_NOTHROW(walk.validate(human));
  auto bad = walk;
  bad.fps = 30.0;
  CHECK_THROWS_AS(bad.validate(human), hmx::ValidationError);
  bad = walk;
  bad.beta[0] = 5.0;
  CHECK_THROWS_AS(bad.validate(human), hmx::ValidationError);
  bad = walk;
  bad.theta.pop_back();
  CHECK_THROWS_AS(bad.validate(human), hmx::DimensionError);
}

TEST_CASE("resample_actions: 20 fps to 50 fps") {
  Matrix two(2, 27);
  for (std::size_t d = 0; d < 27; ++d) {
    two(0, d) = 0.0;
    two(1, d) = 1.0 + d;
  }
  const auto out = resample_actions(two);
  REQUIRE(out.frames() == 3);
  CHECK(out.fps == 50.0);
  for (std::size_t d = 0; d < 27; ++d) {
    CHECK(out.q(0, d) == 0.0);
    CHECK(out.q(1, d) == doctest::Approx(0.4 * (1.0 + d)));
    CHECK(out.q(2, d) == doctest::Approx(0.8 * (1.0 + d)));
  }

  Matrix constant(21, 27, 0.3);
  const auto c = resample_actions(constant);
  CHECK(c.frames() == 51);  // 1 s
  for (double v : c.q.data) CHECK(v == 0.3);

  Matrix ramp(17, 1);
  for (std::size_t f = 0; f < 17; ++f) ramp(f, 0) = f / 20.0;
  const auto r = resample_actions(ramp);
  CHECK(r.frames() == 41);
  for (std::size_t j = 0; j < r.frames(); ++j) CHECK(r.q(j, 0) == doctest::Approx(j / 50.0).epsilon(1e-14));

  Matrix one(1, 27);
  CHECK_THROWS_AS(resample_actions(one), hmx::ValidationError);
}
