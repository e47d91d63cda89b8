#include "hmx/io/sample_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hmx/error.hpp"
#include "json.hpp"

namespace hmx::io {

using nlohmann::json;
using numerics::Vec3;

namespace {

struct KindInfo {
  SampleKind kind;
  std::string_view name;
  double fps;
};

constexpr KindInfo kKinds[] = {
    {SampleKind::HumanPose, "human_pose", 20.0}, {SampleKind::RobotMotion, "robot_motion", 20.0},
    {SampleKind::Action, "action", 50.0},        {SampleKind::Tokens, "tokens", 50.0},
    {SampleKind::Trajectory, "trajectory", 50.0},
};

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

const Array& need(const MotionSample& s, const std::string& name) {
  const auto it = s.arrays.find(name);
  if (it == s.arrays.end())
    throw ValidationError("arrays." + name + ": missing for kind " + std::string(kind_name(s.kind)));
  return it->second;
}

// `want` entries of 0 match any extent.
void expect_shape(const MotionSample& s, const std::string& name, std::vector<std::size_t> want) {
  const Array& a = need(s, name);
  bool ok = a.shape.size() == want.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) ok = want[i] == 0 || want[i] == a.shape[i];
  if (!ok) throw DimensionError("arrays." + name + ".shape: " + shape_str(a.shape) + " does not match " + shape_str(want));
}

}  // namespace

std::string_view kind_name(SampleKind k) noexcept {
  for (const auto& i : kKinds)
    if (i.kind == k) return i.name;
  return "unknown";
}

SampleKind parse_kind(std::string_view name) {
  for (const auto& i : kKinds)
    if (i.name == name) return i.kind;
  throw ValidationError("kind: unknown sample kind '" + std::string(name) + "'");
}

double kind_fps(SampleKind k) noexcept {
  for (const auto& i : kKinds)
    if (i.kind == k) return i.fps;
  return 0.0;
}

void MotionSample::validate() const {
  if (fps != kind_fps(kind))
    throw ValidationError("fps: " + std::string(kind_name(kind)) + " samples are stored at " +
                          std::to_string(static_cast<int>(kind_fps(kind))) + " fps, got " + std::to_string(fps));
  if (frames == 0) throw ValidationError("frames: must be positive");
  for (const auto& [key, v] : attributes)
    if (!std::isfinite(v)) throw NumericError("attributes." + key + ": non-finite value");
  for (const auto& [name, a] : arrays) {
    if (a.shape.empty()) throw DimensionError("arrays." + name + ".shape: empty");
    if (product(a.shape) != a.data.size())
      throw DimensionError("arrays." + name + ".data: " + std::to_string(a.data.size()) + " values for shape " +
                           shape_str(a.shape));
    for (std::size_t i = 0; i < a.data.size(); ++i)
      if (!std::isfinite(a.data[i]))
        throw NumericError("arrays." + name + ".data[" + std::to_string(i) + "]: non-finite value");
  }
  const std::size_t F = frames;
  switch (kind) {
    case SampleKind::HumanPose:
      expect_shape(*this, "beta", {0});
      expect_shape(*this, "theta", {F, 0, 3});
      expect_shape(*this, "t_root", {F, 3});
      break;
    case SampleKind::RobotMotion: {
      expect_shape(*this, "q", {F, 0});
      expect_shape(*this, "root", {F, 7});
      expect_shape(*this, "keypoints", {F, body::kKeypointCount, 3});
      expect_shape(*this, "ik_residual", {F});
      break;
    }
    case SampleKind::Action:
      expect_shape(*this, "q", {F, 0});
      break;
    case SampleKind::Tokens: {
      expect_shape(*this, "tokens", {F});
      const auto& t = need(*this, "tokens").data;
      for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] < 0.0 || t[i] != std::floor(t[i]) || t[i] > 1e9)
          throw ValidationError("arrays.tokens.data[" + std::to_string(i) + "]: not a token index");
      break;
    }
    case SampleKind::Trajectory: {
      expect_shape(*this, "q", {F, 0});
      const std::size_t dofs = need(*this, "q").shape[1];
      expect_shape(*this, "action", {F, dofs});
      expect_shape(*this, "root", {F, 7});
      expect_shape(*this, "reward", {F});
      expect_shape(*this, "imitation", {F});
      break;
    }
  }
}

std::string encode_sample(const MotionSample& s, Encoding enc) {
  s.validate();
  json j;
  j["schema"] = kSampleSchema;
  j["kind"] = kind_name(s.kind);
  j["fps"] = s.fps;
  j["frames"] = s.frames;
  j["text"] = s.text;
  j["provenance"] = s.provenance;
  j["attributes"] = json::object();
  for (const auto& [k, v] : s.attributes) j["attributes"][k] = v;
  j["arrays"] = json::object();
  std::string payload;
  for (const auto& [name, a] : s.arrays) {
    json ja;
    ja["shape"] = a.shape;
    if (enc == Encoding::Text) {
      ja["data"] = a.data;
    } else {
      ja["offset"] = payload.size();
      for (double v : a.data) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
      }
    }
    j["arrays"][name] = std::move(ja);
  }
  if (enc == Encoding::Binary) j["binary"] = {{"encoding", "f64le"}, {"bytes", payload.size()}};
  return j.dump() + "\n" + payload;
}

namespace {

template <class T>
T field(const json& j, const std::string& key, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + key + ": missing");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(path + key + ": wrong type");
  }
}

double read_le(std::string_view bytes, std::size_t at, bool f32) {
  if (f32) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    return static_cast<double>(std::bit_cast<float>(bits));
  }
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

MotionSample decode_sample(std::string_view bytes) {
  const std::size_t nl = bytes.find('\n');
  const std::string_view head = bytes.substr(0, nl);
  json j;
  try {
    j = json::parse(head);
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte) + ": malformed sample header (" + e.what() + ")");
  }
  if (!j.is_object()) throw ParseError("byte 0: sample header is not a JSON object");
  const auto schema = field<std::string>(j, "schema", "");
  if (schema != kSampleSchema) throw ParseError("schema: expected " + std::string(kSampleSchema) + ", got " + schema);

  MotionSample s;
  try {
    s.kind = parse_kind(field<std::string>(j, "kind", ""));
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  s.fps = field<double>(j, "fps", "");
  s.frames = field<std::size_t>(j, "frames", "");
  s.text = field<std::string>(j, "text", "");
  s.provenance = field<std::string>(j, "provenance", "");
  if (j.contains("attributes")) {
    if (!j["attributes"].is_object()) throw ParseError("attributes: not an object");
    for (const auto& [k, v] : j["attributes"].items()) s.attributes[k] = field<double>(j["attributes"], k, "attributes.");
  }

  const bool binary = j.contains("binary");
  std::string_view payload;
  bool f32 = false;
  const std::size_t payload_start = nl == std::string_view::npos ? bytes.size() : nl + 1;
  if (binary) {
    const json& b = j["binary"];
    const auto encoding = field<std::string>(b, "encoding", "binary.");
    if (encoding != "f64le" && encoding != "f32le") throw ParseError("binary.encoding: unsupported '" + encoding + "'");
    f32 = encoding == "f32le";
    const auto n = field<std::size_t>(b, "bytes", "binary.");
    if (nl == std::string_view::npos || bytes.size() - payload_start < n)
      throw ParseError("byte " + std::to_string(bytes.size()) + ": binary section truncated (expected " +
                       std::to_string(n) + " bytes after byte " + std::to_string(payload_start) + ")");
    if (bytes.size() - payload_start > n)
      throw ParseError("byte " + std::to_string(payload_start + n) + ": trailing bytes after the binary section");
    payload = bytes.substr(payload_start, n);
  } else if (bytes.substr(payload_start).find_first_not_of(" \t\r\n") != std::string_view::npos) {
    throw ParseError("byte " + std::to_string(payload_start) + ": unexpected data after the sample document");
  }

  if (!j.contains("arrays") || !j["arrays"].is_object()) throw ParseError("arrays: missing");
  for (const auto& [name, ja] : j["arrays"].items()) {
    const std::string path = "arrays." + name + ".";
    if (!ja.is_object()) throw ParseError(path.substr(0, path.size() - 1) + ": not an object");
    Array a;
    a.shape = field<std::vector<std::size_t>>(ja, "shape", path);
    const std::size_t n = product(a.shape);
    if (binary) {
      const auto off = field<std::size_t>(ja, "offset", path);
      const std::size_t width = f32 ? 4 : 8;
      if (off > payload.size() || n > (payload.size() - off) / width)
        throw ParseError(path + "offset: array runs past the binary section (byte " +
                         std::to_string(payload_start + payload.size()) + ")");
      a.data.resize(n);
      for (std::size_t i = 0; i < n; ++i) a.data[i] = read_le(payload, off + i * width, f32);
    } else {
      const auto it = ja.find("data");
      if (it == ja.end() || !it->is_array()) throw ParseError(path + "data: missing");
      a.data.reserve(it->size());
      for (std::size_t i = 0; i < it->size(); ++i) {
        const json& v = (*it)[i];
        if (!v.is_number()) throw ParseError(path + "data[" + std::to_string(i) + "]: not a number");
        a.data.push_back(v.get<double>());
      }
    }
    s.arrays.emplace(name, std::move(a));
  }
  try {
    s.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  return s;
}

void write_sample(const MotionSample& s, const std::filesystem::path& path, Encoding enc) {
  const std::string bytes = encode_sample(s, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

MotionSample read_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_sample(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

namespace {

Array array_of(std::vector<std::size_t> shape, std::vector<double> data) { return Array{std::move(shape), std::move(data)}; }

MotionSample make(SampleKind kind, std::size_t frames) {
  MotionSample s;
  s.kind = kind;
  s.fps = kind_fps(kind);
  s.frames = frames;
  return s;
}

void check_kind(const MotionSample& s, SampleKind want) {
  if (s.kind != want)
    throw ValidationError("kind: expected " + std::string(kind_name(want)) + ", got " + std::string(kind_name(s.kind)));
  s.validate();
}

std::vector<double> root_rows(std::span<const body::RootState> roots) {
  std::vector<double> d;
  for (const auto& r : roots) {
    const auto& o = r.orientation;
    d.insert(d.end(), {r.translation.x(), r.translation.y(), r.translation.z(), o.w(), o.x(), o.y(), o.z()});
  }
  return d;
}

std::vector<body::RootState> roots_from(const Array& a) {
  std::vector<body::RootState> out(a.shape[0]);
  for (std::size_t f = 0; f < out.size(); ++f) {
    const double* p = a.data.data() + 7 * f;
    out[f].translation = Vec3(p[0], p[1], p[2]);
    out[f].orientation = numerics::UnitQuaternion(p[3], p[4], p[5], p[6]);
  }
  return out;
}

numerics::Matrix matrix_from(const Array& a) {
  numerics::Matrix m(a.shape[0], a.shape[1]);
  m.data = a.data;
  return m;
}

}  // namespace

MotionSample from_human_pose(const retarget::HumanPoseSequence& pose, std::size_t joints) {
  MotionSample s = make(SampleKind::HumanPose, pose.frames());
  s.fps = pose.fps;
  s.arrays["beta"] = array_of({pose.beta.size()}, pose.beta);
  std::vector<double> theta, t_root;
  for (const auto& frame : pose.theta) {
    if (frame.size() != joints) throw DimensionError("human pose: frame has " + std::to_string(frame.size()) + " joints");
    for (const auto& v : frame) theta.insert(theta.end(), {v.x(), v.y(), v.z()});
  }
  for (const auto& t : pose.t_root) t_root.insert(t_root.end(), {t.x(), t.y(), t.z()});
  s.arrays["theta"] = array_of({pose.frames(), joints, 3}, std::move(theta));
  s.arrays["t_root"] = array_of({pose.frames(), 3}, std::move(t_root));
  s.validate();
  return s;
}

retarget::HumanPoseSequence to_human_pose(const MotionSample& s) {
  check_kind(s, SampleKind::HumanPose);
  retarget::HumanPoseSequence p;
  p.fps = s.fps;
  p.beta = need(s, "beta").data;
  const Array& th = need(s, "theta");
  const Array& tr = need(s, "t_root");
  const std::size_t J = th.shape[1];
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::vector<Vec3> frame(J);
    for (std::size_t j = 0; j < J; ++j) {
      const double* v = th.data.data() + (f * J + j) * 3;
      frame[j] = Vec3(v[0], v[1], v[2]);
    }
    p.theta.push_back(std::move(frame));
    p.t_root.emplace_back(tr.data[3 * f], tr.data[3 * f + 1], tr.data[3 * f + 2]);
  }
  return p;
}

MotionSample from_robot_motion(const retarget::RobotMotion& m) {
  MotionSample s = make(SampleKind::RobotMotion, m.frames());
  s.fps = m.fps;
  s.arrays["q"] = array_of({m.q.rows, m.q.cols}, m.q.data);
  s.arrays["root"] = array_of({m.root.size(), 7}, root_rows(m.root));
  std::vector<double> kp;
  for (const auto& frame : m.keypoints.positions)
    for (const auto& v : frame) kp.insert(kp.end(), {v.x(), v.y(), v.z()});
  s.arrays["keypoints"] = array_of({m.keypoints.frames(), body::kKeypointCount, 3}, std::move(kp));
  s.arrays["ik_residual"] = array_of({m.ik_residual.size()}, m.ik_residual);
  s.validate();
  return s;
}

retarget::RobotMotion to_robot_motion(const MotionSample& s) {
  check_kind(s, SampleKind::RobotMotion);
  retarget::RobotMotion m;
  m.fps = s.fps;
  m.q = matrix_from(need(s, "q"));
  m.root = roots_from(need(s, "root"));
  const Array& kp = need(s, "keypoints");
  m.keypoints.fps = s.fps;
  for (std::size_t f = 0; f < s.frames; ++f) {
    retarget::KeypointFrame frame;
    for (std::size_t k = 0; k < body::kKeypointCount; ++k) {
      const double* v = kp.data.data() + (f * body::kKeypointCount + k) * 3;
      frame[k] = Vec3(v[0], v[1], v[2]);
    }
    m.keypoints.positions.push_back(frame);
  }
  m.ik_residual = need(s, "ik_residual").data;
  return m;
}

MotionSample from_actions(const retarget::ActionSequence& a) {
  MotionSample s = make(SampleKind::Action, a.frames());
  s.fps = a.fps;
  s.arrays["q"] = array_of({a.q.rows, a.q.cols}, a.q.data);
  s.validate();
  return s;
}

retarget::ActionSequence to_actions(const MotionSample& s) {
  check_kind(s, SampleKind::Action);
  retarget::ActionSequence a;
  a.fps = s.fps;
  a.q = matrix_from(need(s, "q"));
  return a;
}

MotionSample from_tokens(const tokenizer::TokenSequence& t) {
  MotionSample s = make(SampleKind::Tokens, t.indices.size());
  s.arrays["tokens"] = array_of({t.indices.size()}, std::vector<double>(t.indices.begin(), t.indices.end()));
  s.attributes["source_frames"] = static_cast<double>(t.source_frames);
  s.validate();
  return s;
}

tokenizer::TokenSequence to_tokens(const MotionSample& s) {
  check_kind(s, SampleKind::Tokens);
  tokenizer::TokenSequence t;
  for (double v : need(s, "tokens").data) t.indices.push_back(static_cast<int>(v));
  const auto it = s.attributes.find("source_frames");
  if (it == s.attributes.end() || it->second < 0.0 || it->second != std::floor(it->second))
    throw ValidationError("attributes.source_frames: missing or not a frame count");
  t.source_frames = static_cast<std::size_t>(it->second);
  return t;
}

MotionSample from_trajectory(const control::Trajectory& t) {
  if (t.steps.empty()) throw ValidationError("trajectory: no steps");
  MotionSample s = make(SampleKind::Trajectory, t.steps.size());
  const std::size_t dofs = t.steps[0].state.q.size();
  std::vector<double> q, action, reward, imitation;
  std::vector<body::RootState> roots;
  for (const auto& r : t.steps) {
    q.insert(q.end(), r.state.q.begin(), r.state.q.end());
    action.insert(action.end(), r.action.begin(), r.action.end());
    roots.push_back(r.state.root);
    reward.push_back(r.reward());
    imitation.push_back(r.imitation.total());
  }
  s.arrays["q"] = array_of({t.steps.size(), dofs}, std::move(q));
  s.arrays["action"] = array_of({t.steps.size(), dofs}, std::move(action));
  s.arrays["root"] = array_of({t.steps.size(), 7}, root_rows(roots));
  s.arrays["reward"] = array_of({t.steps.size()}, std::move(reward));
  s.arrays["imitation"] = array_of({t.steps.size()}, std::move(imitation));
  s.validate();
  return s;
}

}  // namespace hmx::io
