#include "hmx/body/robot_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <Eigen/Geometry>

#include "hmx/error.hpp"
#include "hmx/io/structured_text.hpp"

namespace hmx::body {

RobotModel::RobotModel(std::string name, std::vector<RobotLink> links, std::vector<RobotDof> dofs,
                       std::array<int, kKeypointCount> keypoint_links, std::vector<int> leg_dofs,
                       std::vector<int> upper_body_dofs, std::vector<int> ankle_roll_dofs,
                       std::array<FootSpec, 2> feet)
    : name_(std::move(name)),
      links_(std::move(links)),
      dofs_(std::move(dofs)),
      keypoint_links_(keypoint_links),
      leg_dofs_(std::move(leg_dofs)),
      upper_body_dofs_(std::move(upper_body_dofs)),
      ankle_roll_dofs_(std::move(ankle_roll_dofs)),
      feet_(feet) {
  if (dofs_.size() != kRobotDofCount) {
    throw ValidationError("robot model: expected 27 DoFs, found " + std::to_string(dofs_.size()));
  }
  if (links_.empty() || links_[0].parent != -1 || links_[0].dof != -1) {
    throw ValidationError("robot model: link 0 must be an unactuated root");
  }
  const int nl = static_cast<int>(links_.size());
  std::vector<int> dof_seen(dofs_.size(), 0);
  for (int l = 1; l < nl; ++l) {
    const RobotLink& lk = links_[static_cast<std::size_t>(l)];
    if (lk.parent < 0 || lk.parent >= l) {
      throw ValidationError("robot model: link '" + lk.name + "' must have a parent listed before it");
    }
    if (lk.dof >= static_cast<int>(dofs_.size())) throw ValidationError("robot model: bad DoF index");
    if (lk.dof >= 0) {
      if (std::fabs(lk.axis.norm() - 1.0) > 1e-9) {
        throw ValidationError("robot model: link '" + lk.name + "' axis is not unit length");
      }
      ++dof_seen[static_cast<std::size_t>(lk.dof)];
    }
  }
  for (std::size_t d = 0; d < dofs_.size(); ++d) {
    const RobotDof& dof = dofs_[d];
    if (dof_seen[d] != 1 || dof.link < 0 || dof.link >= nl || links_[static_cast<std::size_t>(dof.link)].dof != static_cast<int>(d)) {
      throw ValidationError("robot model: DoF '" + dof.name + "' must drive exactly one link");
    }
    if (!(dof.min < dof.max)) throw ValidationError("robot model: DoF '" + dof.name + "' needs min < max");
    if (dof.default_q < dof.min || dof.default_q > dof.max) {
      throw ValidationError("robot model: DoF '" + dof.name + "' default outside limits");
    }
    if (!(dof.torque_limit > 0.0) || !(dof.inertia > 0.0) || dof.damping < 0.0 || !(dof.kp > 0.0) ||
        !(dof.kd > 0.0)) {
      throw ValidationError("robot model: DoF '" + dof.name +
                            "' needs torque, inertia, kp, kd > 0 and damping >= 0");
    }
  }
  for (const int kl : keypoint_links_)
    if (kl < 0 || kl >= nl) throw ValidationError("robot model: keypoint link out of range");
  auto check_dofs = [&](const std::vector<int>& v, const char* what) {
    for (const int d : v)
      if (d < 0 || d >= static_cast<int>(dofs_.size()))
        throw ValidationError(std::string("robot model: bad DoF in ") + what);
  };
  check_dofs(leg_dofs_, "leg_dofs");
  check_dofs(upper_body_dofs_, "upper_body_dofs");
  check_dofs(ankle_roll_dofs_, "ankle_roll_dofs");
  if (upper_body_dofs_.size() != 9) throw ValidationError("robot model: upper_body_dofs must list 9 DoFs");
  for (const auto& f : feet_)
    if (f.link < 0 || f.link >= nl) throw ValidationError("robot model: foot link out of range");

  ancestor_.assign(links_.size(), std::vector<bool>(links_.size(), false));
  for (int l = 0; l < nl; ++l) {
    for (int a = l; a >= 0; a = links_[static_cast<std::size_t>(a)].parent) {
      ancestor_[static_cast<std::size_t>(l)][static_cast<std::size_t>(a)] = true;
    }
  }
  ik_active_.assign(dofs_.size(), false);
  for (std::size_t d = 0; d < dofs_.size(); ++d) {
    if (std::find(ankle_roll_dofs_.begin(), ankle_roll_dofs_.end(), static_cast<int>(d)) != ankle_roll_dofs_.end())
      continue;
    const int dl = dofs_[d].link;
    for (const int kl : keypoint_links_) {
      if (kl != dl && is_ancestor(dl, kl)) ik_active_[d] = true;
    }
  }
}

std::vector<double> RobotModel::default_pose() const {
  std::vector<double> q(dofs_.size());
  for (std::size_t d = 0; d < dofs_.size(); ++d) q[d] = dofs_[d].default_q;
  return q;
}

bool RobotModel::is_ancestor(int ancestor, int link) const noexcept {
  return ancestor_[static_cast<std::size_t>(link)][static_cast<std::size_t>(ancestor)];
}

int RobotModel::dof_index(std::string_view dof_name) const {
  for (std::size_t d = 0; d < dofs_.size(); ++d)
    if (dofs_[d].name == dof_name) return static_cast<int>(d);
  throw ValidationError("robot model: unknown DoF '" + std::string(dof_name) + "'");
}

int RobotModel::link_index(std::string_view link_name) const {
  for (std::size_t l = 0; l < links_.size(); ++l)
    if (links_[l].name == link_name) return static_cast<int>(l);
  throw ValidationError("robot model: unknown link '" + std::string(link_name) + "'");
}

void RobotModel::check_limits(std::span<const double> q) const {
  if (q.size() != dofs_.size()) {
    throw DimensionError("q has " + std::to_string(q.size()) + " entries, robot has " +
                         std::to_string(dofs_.size()) + " DoFs");
  }
  for (std::size_t d = 0; d < q.size(); ++d) {
    if (!std::isfinite(q[d]) || q[d] < dofs_[d].min || q[d] > dofs_[d].max) {
      throw ValidationError("DoF '" + dofs_[d].name + "' (index " + std::to_string(d) + ") value " +
                            io::format_double(q[d]) + " outside [" + io::format_double(dofs_[d].min) + ", " +
                            io::format_double(dofs_[d].max) + "]");
    }
  }
}

void RobotModel::clamp_to_limits(std::span<double> q) const noexcept {
  for (std::size_t d = 0; d < q.size() && d < dofs_.size(); ++d) q[d] = std::clamp(q[d], dofs_[d].min, dofs_[d].max);
}

std::string RobotModel::to_text() const {
  io::StructuredWriter w;
  w.comment("robot kinematic tree; lengths in meters, angles in radians, torques in N*m");
  w.record("kind").add("robot");
  w.record("name").add(name_);
  for (const RobotDof& d : dofs_) {
    w.record("dof").add(d.name).add("min").add(d.min).add("max").add(d.max).add("torque").add(d.torque_limit);
    w.add("inertia").add(d.inertia).add("damping").add(d.damping).add("kp").add(d.kp).add("kd").add(d.kd);
    w.add("default").add(d.default_q);
  }
  for (const RobotLink& l : links_) {
    w.record("link").add(l.name).add("parent").add(l.parent < 0 ? std::string("-") : links_[static_cast<std::size_t>(l.parent)].name);
    w.add("offset").add(l.offset.x()).add(l.offset.y()).add(l.offset.z());
    if (l.dof >= 0) {
      w.add("dof").add(dofs_[static_cast<std::size_t>(l.dof)].name);
      w.add("axis").add(l.axis.x()).add(l.axis.y()).add(l.axis.z());
    }
  }
  for (std::size_t k = 0; k < kKeypointCount; ++k)
    w.record("keypoint").add(kKeypointNames[k]).add(links_[static_cast<std::size_t>(keypoint_links_[k])].name);
  auto list = [&](const char* key, const std::vector<int>& v) {
    w.record(key);
    for (const int d : v) w.add(dofs_[static_cast<std::size_t>(d)].name);
  };
  list("leg_dofs", leg_dofs_);
  list("upper_body_dofs", upper_body_dofs_);
  list("ankle_roll_dofs", ankle_roll_dofs_);
  const char* sides[2] = {"left", "right"};
  for (int f = 0; f < 2; ++f) {
    const FootSpec& fs = feet_[static_cast<std::size_t>(f)];
    w.record("foot").add(sides[f]).add(links_[static_cast<std::size_t>(fs.link)].name).add("sole");
    w.add(fs.sole_offset.x()).add(fs.sole_offset.y()).add(fs.sole_offset.z());
  }
  return w.str();
}

RobotModel RobotModel::from_text(std::string_view text) {
  const auto st = io::StructuredText::parse(text);
  if (st.string_value("kind") != "robot") throw ParseError("robot model: kind must be 'robot'");
  const std::string name = st.string_value("name");

  std::vector<RobotDof> dofs;
  for (const io::Record* r : st.all("dof")) {
    io::TokenCursor c(*r);
    RobotDof d;
    d.name = c.word();
    c.expect("min");
    d.min = c.number();
    c.expect("max");
    d.max = c.number();
    c.expect("torque");
    d.torque_limit = c.number();
    c.expect("inertia");
    d.inertia = c.number();
    c.expect("damping");
    d.damping = c.number();
    c.expect("kp");
    d.kp = c.number();
    c.expect("kd");
    d.kd = c.number();
    c.expect("default");
    d.default_q = c.number();
    if (!c.done()) c.fail("trailing tokens");
    dofs.push_back(std::move(d));
  }
  auto find_dof = [&](const std::string& n, io::TokenCursor& c) {
    for (std::size_t i = 0; i < dofs.size(); ++i)
      if (dofs[i].name == n) return static_cast<int>(i);
    c.fail("unknown DoF '" + n + "'");
  };

  std::vector<RobotLink> links;
  auto find_link = [&](const std::string& n, io::TokenCursor& c) {
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i].name == n) return static_cast<int>(i);
    c.fail("unknown link '" + n + "'");
  };
  for (const io::Record* r : st.all("link")) {
    io::TokenCursor c(*r);
    RobotLink l;
    l.name = c.word();
    c.expect("parent");
    const std::string parent = c.word();
    l.parent = parent == "-" ? -1 : find_link(parent, c);
    c.expect("offset");
    const auto o = c.numbers(3);
    l.offset = Vec3(o[0], o[1], o[2]);
    if (c.accept("dof")) {
      const std::string dn = c.word();
      l.dof = find_dof(dn, c);
      c.expect("axis");
      const auto a = c.numbers(3);
      l.axis = Vec3(a[0], a[1], a[2]);
      dofs[static_cast<std::size_t>(l.dof)].link = static_cast<int>(links.size());
    }
    if (!c.done()) c.fail("trailing tokens");
    links.push_back(std::move(l));
  }

  std::array<int, kKeypointCount> kp;
  kp.fill(-1);
  for (const io::Record* r : st.all("keypoint")) {
    io::TokenCursor c(*r);
    const std::string kn = c.word();
    const auto it = std::find(kKeypointNames.begin(), kKeypointNames.end(), kn);
    if (it == kKeypointNames.end()) c.fail("unknown keypoint '" + kn + "'");
    kp[static_cast<std::size_t>(it - kKeypointNames.begin())] = find_link(c.word(), c);
  }
  for (std::size_t k = 0; k < kKeypointCount; ++k)
    if (kp[k] < 0) throw ParseError("robot model: keypoint '" + std::string(kKeypointNames[k]) + "' not mapped");

  auto dof_list = [&](const char* key) {
    std::vector<int> out;
    const io::Record& r = st.require(key);
    io::TokenCursor c(r);
    while (!c.done()) out.push_back(find_dof(c.word(), c));
    return out;
  };
  std::array<FootSpec, 2> feet{};
  bool have[2] = {false, false};
  for (const io::Record* r : st.all("foot")) {
    io::TokenCursor c(*r);
    const std::string side = c.word();
    if (side != "left" && side != "right") c.fail("foot side must be left or right");
    const int s = side == "left" ? 0 : 1;
    feet[static_cast<std::size_t>(s)].link = find_link(c.word(), c);
    c.expect("sole");
    const auto o = c.numbers(3);
    feet[static_cast<std::size_t>(s)].sole_offset = Vec3(o[0], o[1], o[2]);
    have[s] = true;
  }
  if (!have[0] || !have[1]) throw ParseError("robot model: both feet must be declared");
  return RobotModel(name, std::move(links), std::move(dofs), kp, dof_list("leg_dofs"), dof_list("upper_body_dofs"),
                    dof_list("ankle_roll_dofs"), feet);
}

RobotModel RobotModel::load(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  try {
    return from_text(text);
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void RobotModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_text();
}

RobotModel default_robot_model() {
  std::vector<RobotLink> links;
  std::vector<RobotDof> dofs(kRobotDofCount);
  auto link = [&](const std::string& name, const std::string& parent, Vec3 offset) {
    RobotLink l;
    l.name = name;
    l.parent = -1;
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i].name == parent) l.parent = static_cast<int>(i);
    l.offset = offset;
    links.push_back(l);
    return static_cast<int>(links.size() - 1);
  };
  struct Drive {
    double min, max, torque, inertia, damping, kp;
  };
  auto joint = [&](int dof, const std::string& name, const std::string& parent, Vec3 offset, Vec3 axis,
                   Drive dr) {
    const int l = link(name + "_link", parent, offset);
    links[static_cast<std::size_t>(l)].dof = dof;
    links[static_cast<std::size_t>(l)].axis = axis;
    RobotDof& d = dofs[static_cast<std::size_t>(dof)];
    d.name = name;
    d.link = l;
    d.min = dr.min;
    d.max = dr.max;
    d.torque_limit = dr.torque;
    d.inertia = dr.inertia;
    d.damping = dr.damping;
    d.kp = dr.kp;
    // Critically damped with margin: kd >= 2 sqrt(kp * I).
    d.kd = std::ceil(2.0 * std::sqrt(dr.kp * dr.inertia) * 10.0) / 10.0;
    d.default_q = 0.0;
    return l;
  };
  const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
  const Drive hip_yaw{-0.43, 0.43, 200, 0.05, 0.1, 200};
  const Drive hip_pitch{-1.4, 1.0, 200, 0.05, 0.1, 200};
  const Drive hip_roll{-0.43, 0.43, 200, 0.05, 0.1, 200};
  const Drive knee{-0.1, 2.0, 300, 0.05, 0.1, 250};
  const Drive ankle_pitch{-0.8, 0.5, 60, 0.02, 0.05, 40};
  const Drive ankle_roll{-0.3, 0.3, 40, 0.02, 0.05, 40};
  const Drive torso{-1.0, 1.0, 200, 0.08, 0.1, 200};
  const Drive shoulder_pitch{-1.0, 1.0, 40, 0.01, 0.05, 100};
  const Drive shoulder_roll{-1.4, 1.4, 40, 0.01, 0.05, 100};
  const Drive shoulder_yaw{-1.2, 1.2, 40, 0.01, 0.05, 100};
  const Drive elbow{-0.2, 2.3, 40, 0.01, 0.05, 100};
  const Drive wrist{-1.0, 1.0, 20, 0.005, 0.02, 30};

  link("pelvis", "", Vec3::Zero());
  for (int side = 0; side < 2; ++side) {
    const std::string s = side == 0 ? "left" : "right";
    const double sy = side == 0 ? 1.0 : -1.0;
    const int base = side * 6;
    // Vector order: yaw, pitch, roll, knee, ankle pitch, ankle roll.
    // Chain order: yaw -> roll -> pitch -> knee -> ankle pitch -> ankle roll.
    joint(base + 0, s + "_hip_yaw", "pelvis", Vec3(0, 0.10 * sy, -0.08), Z, hip_yaw);
    joint(base + 2, s + "_hip_roll", s + "_hip_yaw_link", Vec3::Zero(), X, hip_roll);
    joint(base + 1, s + "_hip_pitch", s + "_hip_roll_link", Vec3::Zero(), Y, hip_pitch);
    joint(base + 3, s + "_knee", s + "_hip_pitch_link", Vec3(0, 0, -0.42), Y, knee);
    joint(base + 4, s + "_ankle_pitch", s + "_knee_link", Vec3(0, 0, -0.42), Y, ankle_pitch);
    joint(base + 5, s + "_ankle_roll", s + "_ankle_pitch_link", Vec3::Zero(), X, ankle_roll);
  }
  joint(12, "torso", "pelvis", Vec3(0, 0, 0.10), Z, torso);
  for (int side = 0; side < 2; ++side) {
    const std::string s = side == 0 ? "left" : "right";
    const double sy = side == 0 ? 1.0 : -1.0;
    const int base = 13 + side * 7;
    // Vector order: shoulder pitch, roll, yaw, elbow, wrist roll, pitch, yaw.
    // Chain order: roll (x) -> yaw (z) -> pitch (twist about the T-pose arm
    // axis) -> elbow -> wrist roll -> wrist pitch -> wrist yaw.
    joint(base + 1, s + "_shoulder_roll", "torso_link", Vec3(0, 0.20 * sy, 0.40), X, shoulder_roll);
    joint(base + 2, s + "_shoulder_yaw", s + "_shoulder_roll_link", Vec3::Zero(), Z, shoulder_yaw);
    joint(base + 0, s + "_shoulder_pitch", s + "_shoulder_yaw_link", Vec3::Zero(), Y, shoulder_pitch);
    // Positive elbow flexion swings the forearm forward (+x).
    joint(base + 3, s + "_elbow", s + "_shoulder_pitch_link", Vec3(0, 0.30 * sy, 0), Vec3(0, 0, -sy), elbow);
    joint(base + 4, s + "_wrist_roll", s + "_elbow_link", Vec3(0, 0.26 * sy, 0), Y, wrist);
    joint(base + 5, s + "_wrist_pitch", s + "_wrist_roll_link", Vec3::Zero(), Z, wrist);
    joint(base + 6, s + "_wrist_yaw", s + "_wrist_pitch_link", Vec3::Zero(), X, wrist);
  }

  auto L = [&](const std::string& n) {
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i].name == n) return static_cast<int>(i);
    throw ValidationError("default robot: missing link " + n);
  };
  const std::array<int, kKeypointCount> kp = {
      L("left_hip_yaw_link"),       L("right_hip_yaw_link"),       L("left_knee_link"),
      L("right_knee_link"),         L("left_ankle_pitch_link"),    L("right_ankle_pitch_link"),
      L("left_shoulder_roll_link"), L("right_shoulder_roll_link"), L("left_elbow_link"),
      L("right_elbow_link"),        L("left_wrist_roll_link"),     L("right_wrist_roll_link")};
  std::vector<int> legs;
  for (int d = 0; d < 12; ++d) legs.push_back(d);
  // Torso plus shoulder pitch/roll/yaw and elbow on each arm.
  const std::vector<int> upper = {12, 13, 14, 15, 16, 20, 21, 22, 23};
  const std::vector<int> ankle_rolls = {5, 11};
  const std::array<FootSpec, 2> feet = {FootSpec{L("left_ankle_roll_link"), Vec3(0.04, 0, -0.07)},
                                        FootSpec{L("right_ankle_roll_link"), Vec3(0.04, 0, -0.07)}};
  return RobotModel("synthetic-humanoid-27dof", std::move(links), std::move(dofs), kp, legs, upper, ankle_rolls, feet);
}

namespace {

std::vector<LinkFrame> link_frames(const RobotModel& model, std::span<const double> q, const RootState& root) {
  const auto& links = model.links();
  std::vector<LinkFrame> frames(links.size());
  frames[0].rotation = root.orientation.to_matrix();
  frames[0].position = root.translation;
  for (std::size_t l = 1; l < links.size(); ++l) {
    const RobotLink& lk = links[l];
    const LinkFrame& pf = frames[static_cast<std::size_t>(lk.parent)];
    frames[l].position = pf.position + pf.rotation * lk.offset;
    if (lk.dof >= 0) {
      const double angle = q[static_cast<std::size_t>(lk.dof)];
      frames[l].rotation = pf.rotation * Eigen::AngleAxisd(angle, lk.axis).toRotationMatrix();
    } else {
      frames[l].rotation = pf.rotation;
    }
  }
  return frames;
}

}  // namespace

RobotFk fk_robot(const RobotModel& model, std::span<const double> q, const RootState& root, LimitMode mode) {
  if (q.size() != model.dof_count()) {
    throw DimensionError("q has " + std::to_string(q.size()) + " entries, robot has " +
                         std::to_string(model.dof_count()) + " DoFs");
  }
  if (mode == LimitMode::Checked) model.check_limits(q);
  RobotFk out;
  out.frames = link_frames(model, q, root);
  for (std::size_t k = 0; k < kKeypointCount; ++k)
    out.keypoints[k] = out.frames[static_cast<std::size_t>(model.keypoint_links()[k])].position;
  return out;
}

Eigen::MatrixXd fk_jacobian(const RobotModel& model, const RobotFk& fk) {
  const auto nd = static_cast<Eigen::Index>(model.dof_count());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * static_cast<Eigen::Index>(kKeypointCount), nd);
  for (std::size_t d = 0; d < model.dof_count(); ++d) {
    const int dl = model.dofs()[d].link;
    const LinkFrame& f = fk.frames[static_cast<std::size_t>(dl)];
    const Vec3 axis = f.rotation * model.links()[static_cast<std::size_t>(dl)].axis;
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      const int kl = model.keypoint_links()[k];
      if (!model.is_ancestor(dl, kl)) continue;
      const Vec3 col = axis.cross(fk.keypoints[k] - f.position);
      jac.block<3, 1>(static_cast<Eigen::Index>(3 * k), static_cast<Eigen::Index>(d)) = col;
    }
  }
  return jac;
}

Eigen::MatrixXd fk_jacobian(const RobotModel& model, std::span<const double> q, const RootState& root,
                            LimitMode mode) {
  return fk_jacobian(model, fk_robot(model, q, root, mode));
}

std::array<Vec3, 2> foot_positions(const RobotModel& model, const RobotFk& fk) {
  std::array<Vec3, 2> out;
  for (std::size_t f = 0; f < 2; ++f) {
    const FootSpec& fs = model.feet()[f];
    const LinkFrame& lf = fk.frames[static_cast<std::size_t>(fs.link)];
    out[f] = lf.position + lf.rotation * fs.sole_offset;
  }
  return out;
}

}  // namespace hmx::body
