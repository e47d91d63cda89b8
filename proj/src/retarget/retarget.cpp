#include "hmx/retarget/retarget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hmx/error.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::retarget {

namespace {

double cosine_scale(int iter, int total, double final_scale) {
  if (total <= 1) return 1.0;
  const double p = static_cast<double>(iter) / static_cast<double>(total - 1);
  return final_scale + (1.0 - final_scale) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<Vec3> robot_tpose_keypoints(const body::RobotModel& robot) {
  const auto fk = body::fk_robot(robot, robot.default_pose(), RootState{});
  return {fk.keypoints.begin(), fk.keypoints.end()};
}

ShapeFitResult fit_shape(const body::HumanBodyModel& human, std::span<const Vec3> robot_tpose_keypoints,
                         const ShapeFitConfig& cfg) {
  if (robot_tpose_keypoints.size() != body::kKeypointCount)
    throw DimensionError("fit_shape: expected 12 target keypoints, got " +
                         std::to_string(robot_tpose_keypoints.size()));
  for (const Vec3& p : robot_tpose_keypoints)
    if (!p.allFinite()) throw ValidationError("fit_shape: non-finite target keypoint");
  if (cfg.max_iters < 1) throw ValidationError("fit_shape: max_iters must be >= 1");
  cfg.adam.validate();

  const std::size_t nb = static_cast<std::size_t>(human.n_beta());
  const std::vector<Vec3> theta_t(human.joint_count(), Vec3::Zero());
  const std::vector<double> zeros(nb, 0.0);
  // Keypoints are affine in beta at fixed theta: P(beta) = P0 + J beta.
  const auto p0 = body::fk_human_keypoints(human, zeros, theta_t, Vec3::Zero());
  const Eigen::MatrixXd jac = body::fk_human_keypoint_shape_jacobian(human, theta_t);
  Eigen::VectorXd offset(3 * body::kKeypointCount);
  for (std::size_t k = 0; k < body::kKeypointCount; ++k)
    offset.segment<3>(static_cast<Eigen::Index>(3 * k)) = p0[k] - robot_tpose_keypoints[k];

  const double bound = body::kBetaBound - cfg.bound_margin;
  std::vector<double> beta(nb, 0.0);
  std::vector<double> grad(nb, 0.0);
  numerics::Adam adam(nb, cfg.adam);

  ShapeFitResult best;
  best.beta_opt = beta;
  best.final_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_history;
  best_history.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);

  int it = 0;
  for (;; ++it) {
    const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(nb));
    const Eigen::VectorXd r = offset + jac * b;
    const double loss = r.norm();
    if (!std::isfinite(loss)) throw NumericError("fit_shape: non-finite loss at iteration " + std::to_string(it));
    if (loss < best.final_loss) {
      best.final_loss = loss;
      best.beta_opt = beta;
    }
    best_history.push_back(best.final_loss);
    if (loss <= 1e-12 || it == cfg.max_iters) break;

    if (loss > 0.0) {
      const Eigen::VectorXd g = jac.transpose() * r / loss;
      for (std::size_t i = 0; i < nb; ++i) grad[i] = g[static_cast<Eigen::Index>(i)];
    } else {
      std::fill(grad.begin(), grad.end(), 0.0);
    }
    adam.step(beta, grad, cosine_scale(it, cfg.max_iters, cfg.final_lr_scale));
    for (double& v : beta) v = std::clamp(v, -bound, bound);
  }
  best.iterations = it;
  const std::size_t window = 200;
  if (best.final_loss <= 1e-12) {
    best.converged = true;
  } else if (best_history.size() > window) {
    const double before = best_history[best_history.size() - 1 - window];
    best.converged = before - best.final_loss < cfg.convergence_tol;
  }
  return best;
}

KeypointSequence extract_keypoints(const body::HumanBodyModel& human, const HumanPoseSequence& pose,
                                   std::span<const double> beta_opt) {
  HumanPoseSequence checked = pose;
  checked.beta.assign(beta_opt.begin(), beta_opt.end());
  checked.validate(human);
  KeypointSequence out;
  out.fps = pose.fps;
  out.positions.resize(pose.frames());
  for (std::size_t f = 0; f < pose.frames(); ++f) {
    const auto kp = body::fk_human_keypoints(human, beta_opt, pose.theta[f], pose.t_root[f]);
    std::copy(kp.begin(), kp.end(), out.positions[f].begin());
  }
  return out;
}

std::vector<RootState> estimate_root_states(std::span<const Vec3> t_root, double fps) {
  if (t_root.empty()) throw ValidationError("root estimate: empty sequence");
  if (!(fps > 0.0)) throw ValidationError("root estimate: fps must be positive");
  const std::size_t n = t_root.size();
  std::vector<RootState> out(n);
  double heading = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (n > 1) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
      const Vec3 v = (t_root[hi] - t_root[lo]) * (fps / static_cast<double>(hi - lo));
      if (std::hypot(v.x(), v.y()) >= kHeadingMinSpeed) heading = std::atan2(v.y(), v.x());
    }
    out[i].translation = t_root[i];
    out[i].orientation = numerics::UnitQuaternion::from_yaw(heading);
  }
  return out;
}

void IkConfig::validate() const {
  if (!(lambda_smooth >= 0.0) || !std::isfinite(lambda_smooth))
    throw ValidationError("ik config: lambda_smooth must be >= 0");
  if (max_iters < 1) throw ValidationError("ik config: max_iters must be >= 1");
  if (!(final_lr_scale > 0.0) || final_lr_scale > 1.0)
    throw ValidationError("ik config: final_lr_scale must be in (0, 1]");
  if (!(convergence_tol >= 0.0)) throw ValidationError("ik config: convergence_tol must be >= 0");
  adam.validate();
}

double smoothing_loss(const Matrix& q) {
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < q.rows; ++i)
    for (std::size_t d = 0; d < q.cols; ++d) s += std::fabs(2.0 * q(i, d) - q(i - 1, d) - q(i + 1, d));
  return s;
}

namespace {

void check_ik_inputs(const KeypointSequence& keypoints, const body::RobotModel& robot,
                     std::span<const RootState> roots, const Matrix& q) {
  if (keypoints.frames() == 0) throw ValidationError("ik: empty keypoint sequence");
  if (roots.size() != keypoints.frames())
    throw DimensionError("ik: " + std::to_string(roots.size()) + " root states for " +
                         std::to_string(keypoints.frames()) + " frames");
  if (q.rows != keypoints.frames() || q.cols != robot.dof_count())
    throw DimensionError("ik: q must be " + std::to_string(keypoints.frames()) + " x " +
                         std::to_string(robot.dof_count()));
}

// Retargeting loss and, when grad is non-null, its subgradient.
IkLoss evaluate(const KeypointSequence& keypoints, const body::RobotModel& robot, std::span<const RootState> roots,
                const Matrix& q, double lambda, Matrix* grad, std::vector<double>* residuals) {
  IkLoss loss;
  const std::size_t nd = q.cols;
  if (grad) std::fill(grad->data.begin(), grad->data.end(), 0.0);
  Eigen::VectorXd sgn(3 * body::kKeypointCount);
  for (std::size_t f = 0; f < q.rows; ++f) {
    const auto fk = body::fk_robot(robot, q.row(f), roots[f], body::LimitMode::Unchecked);
    double dist = 0.0;
    for (std::size_t k = 0; k < body::kKeypointCount; ++k) {
      const Vec3 r = fk.keypoints[k] - keypoints.positions[f][k];
      loss.retarget += r.cwiseAbs().sum();
      dist += r.norm();
      for (int c = 0; c < 3; ++c) sgn[static_cast<Eigen::Index>(3 * k + c)] = sign(r[c]);
    }
    if (residuals) (*residuals)[f] = dist / static_cast<double>(body::kKeypointCount);
    if (grad) {
      const Eigen::MatrixXd jac = body::fk_jacobian(robot, fk);
      const Eigen::VectorXd g = jac.transpose() * sgn;
      for (std::size_t d = 0; d < nd; ++d) (*grad)(f, d) += g[static_cast<Eigen::Index>(d)];
    }
  }
  for (std::size_t i = 1; i + 1 < q.rows; ++i) {
    for (std::size_t d = 0; d < nd; ++d) {
      const double s2 = 2.0 * q(i, d) - q(i - 1, d) - q(i + 1, d);
      loss.smooth += std::fabs(s2);
      if (grad) {
        const double s = lambda * sign(s2);
        (*grad)(i, d) += 2.0 * s;
        (*grad)(i - 1, d) -= s;
        (*grad)(i + 1, d) -= s;
      }
    }
  }
  return loss;
}

}  // namespace

IkLoss ik_loss(const KeypointSequence& keypoints, const body::RobotModel& robot, std::span<const RootState> roots,
               const Matrix& q) {
  check_ik_inputs(keypoints, robot, roots, q);
  return evaluate(keypoints, robot, roots, q, 0.0, nullptr, nullptr);
}

IkResult solve_ik(const KeypointSequence& keypoints, const body::RobotModel& robot, const IkConfig& cfg,
                  std::span<const RootState> roots, const std::optional<Matrix>& init) {
  cfg.validate();
  if (keypoints.frames() == 0) throw ValidationError("ik: empty keypoint sequence");
  for (const auto& frame : keypoints.positions)
    for (const Vec3& p : frame)
      if (!p.allFinite()) throw ValidationError("ik: non-finite target keypoint");

  const std::size_t nf = keypoints.frames();
  const std::size_t nd = robot.dof_count();
  const auto defaults = robot.default_pose();
  const auto& active = robot.ik_active();

  Matrix q(nf, nd);
  if (init) {
    if (init->rows != nf || init->cols != nd)
      throw DimensionError("ik: warm start must be " + std::to_string(nf) + " x " + std::to_string(nd));
    q = *init;
  } else {
    auto seed = defaults;
    for (const auto& [name, value] : cfg.cold_start) seed[static_cast<std::size_t>(robot.dof_index(name))] = value;
    for (std::size_t f = 0; f < nf; ++f) std::copy(seed.begin(), seed.end(), q.row(f).begin());
  }
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t d = 0; d < nd; ++d)
      if (!active[d]) q(f, d) = defaults[d];
    robot.clamp_to_limits(q.row(f));
  }
  check_ik_inputs(keypoints, robot, roots, q);

  IkResult res;
  res.loss_history.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  Matrix grad(nf, nd);
  numerics::Adam adam(q.data.size(), cfg.adam);
  double best = std::numeric_limits<double>::infinity();
  Matrix best_q = q;
  const std::size_t window = 50;

  int it = 0;
  for (;; ++it) {
    const IkLoss l = evaluate(keypoints, robot, roots, q, cfg.lambda_smooth, &grad, nullptr);
    const double total = l.total(cfg.lambda_smooth);
    if (!std::isfinite(total)) throw NumericError("ik: non-finite loss at iteration " + std::to_string(it));
    res.loss_history.push_back(total);
    if (total < best) {
      best = total;
      best_q = q;
    }
    if (it == cfg.max_iters) break;
    const std::size_t h = res.loss_history.size();
    if (h >= 2 * window && h % window == 0) {
      double prev = 0.0, cur = 0.0;
      for (std::size_t i = h - 2 * window; i < h - window; ++i) prev += res.loss_history[i];
      for (std::size_t i = h - window; i < h; ++i) cur += res.loss_history[i];
      if (prev - cur <= cfg.convergence_tol * prev) break;
    }
    for (std::size_t f = 0; f < nf; ++f)
      for (std::size_t d = 0; d < nd; ++d)
        if (!active[d]) grad(f, d) = 0.0;
    adam.step(q.data, grad.data, cosine_scale(it, cfg.max_iters, cfg.final_lr_scale));
    for (std::size_t f = 0; f < nf; ++f) robot.clamp_to_limits(q.row(f));
  }
  res.iterations = it;
  res.q = std::move(best_q);
  res.residuals.assign(nf, 0.0);
  res.final_loss = evaluate(keypoints, robot, roots, res.q, cfg.lambda_smooth, nullptr, &res.residuals)
                       .total(cfg.lambda_smooth);
  return res;
}

RetargetResult retarget_sequence(const body::HumanBodyModel& human, const HumanPoseSequence& pose,
                                 const body::RobotModel& robot, const RetargetConfig& cfg) {
  pose.validate(human);
  RetargetResult out;
  out.shape = fit_shape(human, robot_tpose_keypoints(robot), cfg.shape);
  auto keypoints = extract_keypoints(human, pose, out.shape.beta_opt);
  auto roots = estimate_root_states(pose.t_root, pose.fps);
  auto ik = solve_ik(keypoints, robot, cfg.ik, roots);
  out.loss = ik_loss(keypoints, robot, roots, ik.q);
  out.motion.keypoints = std::move(keypoints);
  out.motion.q = std::move(ik.q);
  out.motion.root = std::move(roots);
  out.motion.ik_residual = std::move(ik.residuals);
  out.motion.fps = pose.fps;
  return out;
}

ActionSequence resample_actions(const Matrix& q20) {
  if (q20.rows < 2) throw ValidationError("resample: at least 2 frames required, got " + std::to_string(q20.rows));
  // Output frame j sits at t = j/50 s, i.e. input position 2j/5.
  const std::size_t n = q20.rows;
  // floor(duration * 50) + 1 with duration = (n - 1) / 20.
  const std::size_t out_frames = (5 * (n - 1)) / 2 + 1;
  ActionSequence out;
  out.q = Matrix(out_frames, q20.cols);
  for (std::size_t j = 0; j < out_frames; ++j) {
    const std::size_t idx = (2 * j) / 5;
    const std::size_t rem = (2 * j) % 5;
    for (std::size_t d = 0; d < q20.cols; ++d) {
      if (rem == 0) {
        out.q(j, d) = q20(idx, d);
      } else {
        const double frac = static_cast<double>(rem) / 5.0;
        out.q(j, d) = q20(idx, d) + frac * (q20(idx + 1, d) - q20(idx, d));
      }
    }
  }
  return out;
}

HumanPoseSequence synthetic_walk(const body::HumanBodyModel& human, std::size_t frames, double speed,
                                 double turn_rate, std::uint64_t seed) {
  if (frames == 0) throw ValidationError("synthetic walk: frames must be >= 1");
  numerics::Prng rng(seed);
  const double step_hz = 0.9 + 0.2 * rng.uniform();
  const double phase0 = 2.0 * std::numbers::pi * rng.uniform();
  const double swing = 0.35 + 0.1 * rng.uniform();
  const double arm_swing = 0.25 + 0.1 * rng.uniform();

  const auto j = [&](std::string_view name) { return static_cast<std::size_t>(human.index_of(name)); };
  const std::size_t pelvis = 0, lhip = j("left_hip"), rhip = j("right_hip"), lknee = j("left_knee"),
                    rknee = j("right_knee"), lsh = j("left_shoulder"), rsh = j("right_shoulder"),
                    lel = j("left_elbow"), rel = j("right_elbow");
  using numerics::UnitQuaternion;

  HumanPoseSequence pose;
  pose.beta.assign(static_cast<std::size_t>(human.n_beta()), 0.0);
  pose.theta.assign(frames, std::vector<Vec3>(human.joint_count(), Vec3::Zero()));
  pose.t_root.resize(frames);
  Vec3 pos(0.0, 0.0, 0.93);
  double yaw = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / kPoseFps;
    const double ph = phase0 + 2.0 * std::numbers::pi * step_hz * t;
    const double s = std::sin(ph);
    auto& th = pose.theta[f];
    th[pelvis] = Vec3(0.0, 0.0, yaw);
    // Negative rotation about y swings a limb forward.
    th[lhip] = Vec3(0.0, -swing * s, 0.0);
    th[rhip] = Vec3(0.0, swing * s, 0.0);
    th[lknee] = Vec3(0.0, 0.15 + 0.45 * std::max(0.0, -std::cos(ph)), 0.0);
    th[rknee] = Vec3(0.0, 0.15 + 0.45 * std::max(0.0, std::cos(ph)), 0.0);
    const auto lower_l = UnitQuaternion::from_axis_angle(Vec3::UnitX(), -1.25);
    const auto lower_r = UnitQuaternion::from_axis_angle(Vec3::UnitX(), 1.25);
    th[lsh] = (UnitQuaternion::from_axis_angle(Vec3::UnitY(), arm_swing * s) * lower_l).to_axis_angle();
    th[rsh] = (UnitQuaternion::from_axis_angle(Vec3::UnitY(), -arm_swing * s) * lower_r).to_axis_angle();
    th[lel] = Vec3(0.0, 0.0, -0.3);
    th[rel] = Vec3(0.0, 0.0, 0.3);
    pose.t_root[f] = pos + Vec3(0.0, 0.0, 0.015 * std::cos(2.0 * ph));
    pos += Vec3(std::cos(yaw), std::sin(yaw), 0.0) * (speed / kPoseFps);
    yaw = numerics::wrap_angle(yaw + turn_rate / kPoseFps);
  }
  return pose;
}

}  // namespace hmx::retarget
