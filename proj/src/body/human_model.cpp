#include "hmx/body/human_model.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "hmx/error.hpp"
#include "hmx/io/structured_text.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::body {

using numerics::Mat3;
using numerics::UnitQuaternion;

HumanBodyModel::HumanBodyModel(std::string name, std::vector<HumanJoint> joints, int n_beta)
    : name_(std::move(name)), joints_(std::move(joints)), n_beta_(n_beta) {
  if (joints_.empty()) throw ValidationError("human model: no joints");
  if (n_beta_ < 0) throw ValidationError("human model: negative n_beta");
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const HumanJoint& jt = joints_[j];
    if (j == 0) {
      if (jt.parent != -1) throw ValidationError("human model: joint 0 must be the root");
    } else {
      if (jt.parent < 0 || jt.parent >= static_cast<int>(j)) {
        throw ValidationError("human model: joint '" + jt.name + "' must have a parent listed before it");
      }
      if (!(jt.base_offset.norm() > 0.0)) {
        throw ValidationError("human model: joint '" + jt.name + "' has a zero-length base bone");
      }
    }
    if (jt.shape_basis.rows() != 3 || jt.shape_basis.cols() != n_beta_) {
      throw ValidationError("human model: joint '" + jt.name + "' shape basis must be 3 x n_beta");
    }
    if (!jt.base_offset.allFinite() || !jt.shape_basis.allFinite()) {
      throw ValidationError("human model: joint '" + jt.name + "' has non-finite data");
    }
  }
  for (std::size_t k = 0; k < kKeypointCount; ++k) keypoint_joints_[k] = index_of(kKeypointNames[k]);
}

int HumanBodyModel::index_of(std::string_view joint_name) const {
  for (std::size_t j = 0; j < joints_.size(); ++j)
    if (joints_[j].name == joint_name) return static_cast<int>(j);
  throw ValidationError("human model: missing joint '" + std::string(joint_name) + "'");
}

std::string HumanBodyModel::to_text() const {
  io::StructuredWriter w;
  w.comment("parametric human body: offsets = base + basis * beta (meters), basis row-major 3 x n_beta");
  w.record("kind").add("human");
  w.record("name").add(name_);
  w.record("n_beta").add(n_beta_);
  for (const auto& j : joints_) {
    w.record("joint").add(j.name).add("parent").add(j.parent < 0 ? std::string("-") : joints_[j.parent].name);
    w.add("offset").add(j.base_offset.x()).add(j.base_offset.y()).add(j.base_offset.z());
    w.add("basis");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < n_beta_; ++c) w.add(j.shape_basis(r, c));
  }
  return w.str();
}

HumanBodyModel HumanBodyModel::from_text(std::string_view text) {
  const auto st = io::StructuredText::parse(text);
  if (st.string_value("kind") != "human") throw ParseError("human model: kind must be 'human'");
  const std::string name = st.string_value("name");
  const long long n_beta = st.integer("n_beta");
  if (n_beta < 0 || n_beta > 1000) throw ParseError("human model: n_beta out of range");
  std::vector<HumanJoint> joints;
  for (const io::Record* r : st.all("joint")) {
    io::TokenCursor c(*r);
    HumanJoint j;
    j.name = c.word();
    c.expect("parent");
    const std::string parent = c.word();
    if (parent == "-") {
      j.parent = -1;
    } else {
      j.parent = -2;
      for (std::size_t p = 0; p < joints.size(); ++p)
        if (joints[p].name == parent) j.parent = static_cast<int>(p);
      if (j.parent == -2) c.fail("unknown parent '" + parent + "'");
    }
    c.expect("offset");
    const auto o = c.numbers(3);
    j.base_offset = Vec3(o[0], o[1], o[2]);
    c.expect("basis");
    const auto b = c.numbers(static_cast<std::size_t>(3 * n_beta));
    j.shape_basis.resize(3, n_beta);
    for (int rr = 0; rr < 3; ++rr)
      for (int cc = 0; cc < n_beta; ++cc) j.shape_basis(rr, cc) = b[static_cast<std::size_t>(rr * n_beta + cc)];
    if (!c.done()) c.fail("trailing tokens");
    joints.push_back(std::move(j));
  }
  return HumanBodyModel(name, std::move(joints), static_cast<int>(n_beta));
}

HumanBodyModel HumanBodyModel::load(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  try {
    return from_text(text);
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void HumanBodyModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_text();
}

HumanBodyModel default_human_model() {
  constexpr int nb = 10;
  struct Spec {
    const char* name;
    const char* parent;
    double x, y, z;
  };
  // z up, x forward, y left; T-pose with arms along +-y.
  const Spec specs[] = {
      {"pelvis", nullptr, 0, 0, 0},
      {"left_hip", "pelvis", 0, 0.09, -0.07},
      {"left_knee", "left_hip", 0, 0, -0.40},
      {"left_ankle", "left_knee", 0, 0, -0.40},
      {"left_foot", "left_ankle", 0.12, 0, -0.06},
      {"right_hip", "pelvis", 0, -0.09, -0.07},
      {"right_knee", "right_hip", 0, 0, -0.40},
      {"right_ankle", "right_knee", 0, 0, -0.40},
      {"right_foot", "right_ankle", 0.12, 0, -0.06},
      {"spine", "pelvis", 0, 0, 0.12},
      {"chest", "spine", 0, 0, 0.25},
      {"neck", "chest", 0, 0, 0.18},
      {"head", "neck", 0, 0, 0.12},
      {"left_collar", "chest", 0, 0.07, 0.12},
      {"left_shoulder", "left_collar", 0, 0.12, 0},
      {"left_elbow", "left_shoulder", 0, 0.28, 0},
      {"left_wrist", "left_elbow", 0, 0.25, 0},
      {"right_collar", "chest", 0, -0.07, 0.12},
      {"right_shoulder", "right_collar", 0, -0.12, 0},
      {"right_elbow", "right_shoulder", 0, -0.28, 0},
      {"right_wrist", "right_elbow", 0, -0.25, 0},
  };
  std::vector<HumanJoint> joints;
  numerics::Prng rng(0x5EEDB0D1ULL);
  for (const Spec& s : specs) {
    HumanJoint j;
    j.name = s.name;
    j.parent = -1;
    if (s.parent) {
      for (std::size_t p = 0; p < joints.size(); ++p)
        if (joints[p].name == s.parent) j.parent = static_cast<int>(p);
    }
    j.base_offset = Vec3(s.x, s.y, s.z);
    j.shape_basis = Eigen::MatrixXd::Zero(3, nb);
    const std::string n = s.name;
    const double side = j.base_offset.y() > 0 ? 1.0 : (j.base_offset.y() < 0 ? -1.0 : 0.0);
    if (j.parent >= 0) {
      j.shape_basis.col(0) = 0.05 * j.base_offset;
      if (n.find("knee") != std::string::npos || n.find("ankle") != std::string::npos) {
        j.shape_basis.col(1) = 0.04 * j.base_offset;
      }
      if (n.find("elbow") != std::string::npos || n.find("wrist") != std::string::npos) {
        j.shape_basis.col(2) = 0.04 * j.base_offset;
      }
      if (n.find("collar") != std::string::npos) j.shape_basis(1, 3) = 0.01 * side;
      if (n.find("hip") != std::string::npos) j.shape_basis(1, 4) = 0.01 * side;
      if (n == "spine" || n == "chest" || n == "neck") j.shape_basis.col(5) = 0.03 * j.base_offset;
      for (int c = 6; c < nb; ++c)
        for (int r = 0; r < 3; ++r) j.shape_basis(r, c) = 0.005 * rng.normal();
    }
    joints.push_back(std::move(j));
  }
  return HumanBodyModel("smpl-lite-21", std::move(joints), nb);
}

void check_beta(const HumanBodyModel& model, std::span<const double> beta) {
  if (static_cast<int>(beta.size()) != model.n_beta()) {
    throw DimensionError("beta has " + std::to_string(beta.size()) + " entries, model expects " +
                         std::to_string(model.n_beta()));
  }
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!std::isfinite(beta[i]) || !(std::fabs(beta[i]) < kBetaBound)) {
      throw ValidationError("beta[" + std::to_string(i) + "] outside (-5, 5)");
    }
  }
}

namespace {

// Global rotation per joint.
std::vector<Mat3> global_rotations(const HumanBodyModel& model, std::span<const Vec3> theta) {
  const auto& joints = model.joints();
  if (theta.size() != joints.size()) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " joints, model has " +
                         std::to_string(joints.size()));
  }
  std::vector<Mat3> g(joints.size());
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const Mat3 local = UnitQuaternion::from_axis_angle(theta[j]).to_matrix();
    g[j] = joints[j].parent < 0 ? local : Mat3(g[static_cast<std::size_t>(joints[j].parent)] * local);
  }
  return g;
}

}  // namespace

std::vector<Vec3> fk_human(const HumanBodyModel& model, std::span<const double> beta,
                           std::span<const Vec3> theta, const Vec3& t_root) {
  check_beta(model, beta);
  const auto& joints = model.joints();
  const auto g = global_rotations(model, theta);
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
  std::vector<Vec3> pos(joints.size());
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (joints[j].parent < 0) {
      pos[j] = t_root;
      continue;
    }
    const auto p = static_cast<std::size_t>(joints[j].parent);
    const Vec3 offset = joints[j].base_offset + joints[j].shape_basis * b;
    pos[j] = pos[p] + g[p] * offset;
  }
  return pos;
}

std::vector<Vec3> fk_human_keypoints(const HumanBodyModel& model, std::span<const double> beta,
                                     std::span<const Vec3> theta, const Vec3& t_root) {
  const auto all = fk_human(model, beta, theta, t_root);
  std::vector<Vec3> kp(kKeypointCount);
  for (std::size_t k = 0; k < kKeypointCount; ++k) kp[k] = all[static_cast<std::size_t>(model.keypoint_joints()[k])];
  return kp;
}

Eigen::MatrixXd fk_human_keypoint_shape_jacobian(const HumanBodyModel& model, std::span<const Vec3> theta) {
  const auto& joints = model.joints();
  const auto g = global_rotations(model, theta);
  // d pos_j / d beta = d pos_parent / d beta + G_parent * B_j
  std::vector<Eigen::MatrixXd> d(joints.size(), Eigen::MatrixXd::Zero(3, model.n_beta()));
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (joints[j].parent < 0) continue;
    const auto p = static_cast<std::size_t>(joints[j].parent);
    d[j] = d[p] + g[p] * joints[j].shape_basis;
  }
  Eigen::MatrixXd jac(3 * kKeypointCount, model.n_beta());
  for (std::size_t k = 0; k < kKeypointCount; ++k)
    jac.block(static_cast<Eigen::Index>(3 * k), 0, 3, model.n_beta()) =
        d[static_cast<std::size_t>(model.keypoint_joints()[k])];
  return jac;
}

}  // namespace hmx::body
