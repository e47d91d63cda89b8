#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "hmx/body/human_model.hpp"
#include "hmx/body/robot_model.hpp"
#include "hmx/error.hpp"
#include "hmx/numerics/finite_diff.hpp"
#include "hmx/numerics/prng.hpp"

using namespace hmx::body;
using hmx::numerics::Prng;

namespace {

std::vector<double> random_in_limits(const RobotModel& m, Prng& rng) {
  std::vector<double> q(m.dof_count());
  for (std::size_t d = 0; d < q.size(); ++d) q[d] = rng.uniform(m.dofs()[d].min, m.dofs()[d].max);
  return q;
}

RootState random_root(Prng& rng) {
  return RootState{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 1.5)),
                   UnitQuaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal())};
}

}  // namespace

TEST_CASE("fk_human rest pose is the cumulative sum of base offsets") {
  const auto model = default_human_model();
  const std::vector<double> beta(10, 0.0);
  const std::vector<Vec3> theta(model.joint_count(), Vec3::Zero());
  const auto pos = fk_human(model, beta, theta, Vec3::Zero());
  for (std::size_t j = 0; j < model.joint_count(); ++j) {
    Vec3 expect = Vec3::Zero();
    for (int a = static_cast<int>(j); a > 0; a = model.joints()[static_cast<std::size_t>(a)].parent)
      expect += model.joints()[static_cast<std::size_t>(a)].base_offset;
    CHECK((pos[j] - expect).norm() < 1e-15);
  }
  // left wrist: collar (0,.07,.12) + shoulder (0,.12,0) + elbow (0,.28,0) + wrist (0,.25,0) + spine/chest z.
  const auto lw = pos[static_cast<std::size_t>(model.index_of("left_wrist"))];
  CHECK(lw.y() == doctest::Approx(0.72));
  CHECK(lw.z() == doctest::Approx(0.49));
}

TEST_CASE("fk_human is translation equivariant and bone lengths do not depend on pose") {
  const auto model = default_human_model();
  Prng rng(1);
  std::vector<double> beta(10);
  for (auto& b : beta) b = rng.uniform(-4, 4);
  std::vector<double> lengths;
  for (int frame = 0; frame < 5; ++frame) {
    std::vector<Vec3> theta(model.joint_count());
    for (auto& t : theta) t = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto p0 = fk_human(model, beta, theta, Vec3::Zero());
    const auto p1 = fk_human(model, beta, theta, Vec3(1, 2, 3));
    for (std::size_t j = 0; j < p0.size(); ++j) CHECK(((p1[j] - p0[j]) - Vec3(1, 2, 3)).norm() < 1e-14);
    std::vector<double> l;
    for (std::size_t j = 1; j < p0.size(); ++j)
      l.push_back((p0[j] - p0[static_cast<std::size_t>(model.joints()[j].parent)]).norm());
    if (lengths.empty()) lengths = l;
    for (std::size_t j = 0; j < l.size(); ++j) CHECK(l[j] == doctest::Approx(lengths[j]).epsilon(1e-12));
  }
}

TEST_CASE("fk_human two-link geometry: parent rotated 90 degrees about z") {
  // elbow -> wrist offset is (0, 0.25, 0); rotating the elbow joint by +90
  // degrees about z must place the wrist at elbow + (-0.25, 0, 0).
  const auto model = default_human_model();
  std::vector<Vec3> theta(model.joint_count(), Vec3::Zero());
  const auto elbow = static_cast<std::size_t>(model.index_of("left_elbow"));
  const auto wrist = static_cast<std::size_t>(model.index_of("left_wrist"));
  theta[elbow] = Vec3(0, 0, std::numbers::pi / 2);
  const auto pos = fk_human(model, std::vector<double>(10, 0.0), theta, Vec3::Zero());
  CHECK((pos[wrist] - (pos[elbow] + Vec3(-0.25, 0, 0))).norm() < 1e-15);
}

TEST_CASE("fk_human errors and shape bound") {
  const auto model = default_human_model();
  const std::vector<Vec3> theta(model.joint_count(), Vec3::Zero());
  CHECK_THROWS_AS(fk_human(model, std::vector<double>(9, 0.0), theta, Vec3::Zero()), hmx::DimensionError);
  std::vector<double> beta(10, 0.0);
  beta[3] = 5.0;
  CHECK_THROWS_AS(fk_human(model, beta, theta, Vec3::Zero()), hmx::ValidationError);
  CHECK_THROWS_AS(fk_human(model, std::vector<double>(10, 0.0), std::vector<Vec3>(3), Vec3::Zero()),
                  hmx::DimensionError);
}

TEST_CASE("human shape jacobian matches finite differences") {
  const auto model = default_human_model();
  Prng rng(8);
  std::vector<Vec3> theta(model.joint_count());
  for (auto& t : theta) t = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  std::vector<double> beta(10);
  for (auto& b : beta) b = rng.uniform(-2, 2);
  const auto jac = fk_human_keypoint_shape_jacobian(model, theta);
  for (int row = 0; row < 36; ++row) {
    auto f = [&](std::span<const double> b) {
      return fk_human_keypoints(model, b, theta, Vec3::Zero())[static_cast<std::size_t>(row / 3)][row % 3];
    };
    const auto g = hmx::numerics::finite_diff_grad(f, beta, 1e-5);
    for (int c = 0; c < 10; ++c) CHECK(std::fabs(g[static_cast<std::size_t>(c)] - jac(row, c)) < 1e-9);
  }
}

TEST_CASE("human model validation") {
  auto joints = default_human_model().joints();
  joints.erase(joints.begin() + 16);  // left_wrist
  CHECK_THROWS_AS(HumanBodyModel("x", joints, 10), hmx::ValidationError);
  auto j2 = default_human_model().joints();
  j2[3].base_offset = Vec3::Zero();
  CHECK_THROWS_AS(HumanBodyModel("x", j2, 10), hmx::ValidationError);
}

TEST_CASE("robot model invariants") {
  const auto robot = default_robot_model();
  CHECK(robot.dof_count() == 27);
  CHECK(robot.keypoint_links().size() == 12);
  CHECK(robot.upper_body_dofs().size() == 9);
  for (const auto& d : robot.dofs()) {
    CHECK(d.min < d.max);
    CHECK(d.kd >= 2.0 * std::sqrt(d.kp * d.inertia));
  }
  // Ankle rolls and the wrists cannot move any keypoint.
  int active = 0;
  for (bool a : robot.ik_active()) active += a ? 1 : 0;
  CHECK(active == 17);
  CHECK_FALSE(robot.ik_active()[static_cast<std::size_t>(robot.dof_index("left_ankle_roll"))]);
  CHECK_FALSE(robot.ik_active()[static_cast<std::size_t>(robot.dof_index("right_wrist_yaw"))]);
  CHECK(robot.ik_active()[static_cast<std::size_t>(robot.dof_index("torso"))]);
}

TEST_CASE("fk_robot default pose gives the T-pose keypoints") {
  const auto robot = default_robot_model();
  const auto fk = fk_robot(robot, robot.default_pose(), RootState{});
  // Hand-computed from the bundled offsets.
  CHECK((fk.keypoints[0] - Vec3(0, 0.10, -0.08)).norm() < 1e-15);
  CHECK((fk.keypoints[2] - Vec3(0, 0.10, -0.50)).norm() < 1e-15);
  CHECK((fk.keypoints[5] - Vec3(0, -0.10, -0.92)).norm() < 1e-15);
  CHECK((fk.keypoints[6] - Vec3(0, 0.20, 0.50)).norm() < 1e-15);
  CHECK((fk.keypoints[9] - Vec3(0, -0.50, 0.50)).norm() < 1e-15);
  CHECK((fk.keypoints[10] - Vec3(0, 0.76, 0.50)).norm() < 1e-15);
}

TEST_CASE("fk_robot is equivariant under root rotation and translation") {
  const auto robot = default_robot_model();
  Prng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_in_limits(robot, rng);
    const RootState root = random_root(rng);
    const auto base = fk_robot(robot, q, RootState{});
    const auto moved = fk_robot(robot, q, root);
    const Mat3 r = root.orientation.to_matrix();
    for (std::size_t k = 0; k < 12; ++k) {
      CHECK((moved.keypoints[k] - (root.translation + r * base.keypoints[k])).norm() < 1e-13);
    }
  }
}

TEST_CASE("elbow sweep moves the wrist on a circle of forearm radius") {
  const auto robot = default_robot_model();
  auto q = robot.default_pose();
  const auto elbow = static_cast<std::size_t>(robot.dof_index("left_elbow"));
  for (int i = 0; i <= 10; ++i) {
    q[elbow] = (std::numbers::pi / 2) * i / 10.0;
    const auto fk = fk_robot(robot, q, RootState{});
    const Vec3 rel = fk.keypoints[10] - fk.keypoints[8];
    CHECK(rel.norm() == doctest::Approx(0.26).epsilon(1e-14));
    CHECK(rel.z() == doctest::Approx(0.0).epsilon(1e-14));
    // Positive flexion swings forward: angle from +y toward +x.
    CHECK(std::atan2(rel.x(), rel.y()) == doctest::Approx(q[elbow]).epsilon(1e-12));
  }
}

TEST_CASE("fk_robot checked mode names the violating DoF") {
  const auto robot = default_robot_model();
  auto q = robot.default_pose();
  q[3] = 2.5;
  try {
    fk_robot(robot, q, RootState{});
    FAIL("expected limit error");
  } catch (const hmx::ValidationError& e) {
    CHECK(std::string(e.what()).find("left_knee") != std::string::npos);
  }
  CHECK_NOTHROW(fk_robot(robot, q, RootState{}, LimitMode::Unchecked));
  CHECK_THROWS_AS(fk_robot(robot, std::vector<double>(26, 0.0), RootState{}), hmx::DimensionError);
}

TEST_CASE("fk_jacobian matches finite differences at 100 random configurations") {
  const auto robot = default_robot_model();
  Prng rng(100);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto q = random_in_limits(robot, rng);
    const RootState root = random_root(rng);
    const auto jac = fk_jacobian(robot, q, root);
    const double scale = jac.cwiseAbs().maxCoeff();
    for (int row = 0; row < 36; ++row) {
      auto f = [&](std::span<const double> x) {
        return fk_robot(robot, x, root, LimitMode::Unchecked).keypoints[static_cast<std::size_t>(row / 3)][row % 3];
      };
      const auto g = hmx::numerics::finite_diff_grad(f, q, 1e-6);
      for (int c = 0; c < 27; ++c) {
        const double a = jac(row, c), b = g[static_cast<std::size_t>(c)];
        worst = std::max(worst, std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3 * scale}));
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("fk_jacobian zero pattern and straight-arm singularity") {
  const auto robot = default_robot_model();
  const auto q = robot.default_pose();  // arms and legs fully straight
  const auto jac = fk_jacobian(robot, q, RootState{});
  CHECK(jac.allFinite());
  for (std::size_t d = 0; d < 27; ++d) {
    for (std::size_t k = 0; k < 12; ++k) {
      const bool ancestor = robot.is_ancestor(robot.dofs()[d].link, robot.keypoint_links()[k]);
      if (!ancestor) CHECK(jac.block<3, 1>(static_cast<Eigen::Index>(3 * k), static_cast<Eigen::Index>(d)).norm() == 0.0);
    }
  }
  // The left knee never influences a right-side or upper-body keypoint.
  const auto knee = robot.dof_index("left_knee");
  for (std::size_t k : {1u, 3u, 5u, 6u, 7u, 8u, 9u, 10u, 11u}) CHECK(jac.block<3, 1>(3 * static_cast<Eigen::Index>(k), knee).norm() == 0.0);
}

TEST_CASE("model files round-trip exactly") {
  const auto robot = default_robot_model();
  const auto robot2 = RobotModel::from_text(robot.to_text());
  CHECK(robot2.to_text() == robot.to_text());
  const auto human = default_human_model();
  const auto human2 = HumanBodyModel::from_text(human.to_text());
  CHECK(human2.to_text() == human.to_text());
  for (std::size_t j = 0; j < human.joint_count(); ++j) {
    CHECK(human2.joints()[j].shape_basis == human.joints()[j].shape_basis);
  }
  CHECK_THROWS_AS(RobotModel::from_text("hmx-model/2\nkind robot\n"), hmx::ParseError);
  CHECK_THROWS_AS(RobotModel::from_text("hmx-model/1\nkind human\n"), hmx::ParseError);
}
