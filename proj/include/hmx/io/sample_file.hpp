#pragma once

// Self-describing motion sample files, schema "hmx/1".
//
// Text form: one JSON document whose arrays carry shape and decimal data.
// Binary form: the same JSON header with each array's data replaced by a
// byte offset into a little-endian section that follows the header line
// ("encoding": "f64le" when written here; "f32le" is accepted on read).

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hmx/control/rollout.hpp"
#include "hmx/retarget/motion.hpp"
#include "hmx/tokenizer/tokenizer.hpp"

namespace hmx::io {

inline constexpr std::string_view kSampleSchema = "hmx/1";

enum class SampleKind { HumanPose, RobotMotion, Action, Tokens, Trajectory };

std::string_view kind_name(SampleKind k) noexcept;
// Throws ValidationError for an unknown name.
SampleKind parse_kind(std::string_view name);
// 20 for poses and robot motion, 50 for actions, tokens and trajectories.
double kind_fps(SampleKind k) noexcept;

struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  friend bool operator==(const Array&, const Array&) = default;
};

struct MotionSample {
  SampleKind kind = SampleKind::Action;
  double fps = 50.0;
  std::size_t frames = 0;
  std::string text;        // description, may be empty
  std::string provenance;  // free-text source tag
  std::map<std::string, double> attributes;
  std::map<std::string, Array> arrays;

  // Throws ValidationError / DimensionError / NumericError naming the field
  // path (e.g. "arrays.q.data[41]").
  void validate() const;
  friend bool operator==(const MotionSample&, const MotionSample&) = default;
};

enum class Encoding { Text, Binary };

std::string encode_sample(const MotionSample& s, Encoding enc = Encoding::Text);
// ParseError names the byte offset for framing errors and the field path for
// content errors.
MotionSample decode_sample(std::string_view bytes);
void write_sample(const MotionSample& s, const std::filesystem::path& path, Encoding enc = Encoding::Text);
MotionSample read_sample(const std::filesystem::path& path);

// Typed views. to_* validate the kind and shapes.
MotionSample from_human_pose(const retarget::HumanPoseSequence& pose, std::size_t joints);
retarget::HumanPoseSequence to_human_pose(const MotionSample& s);
MotionSample from_robot_motion(const retarget::RobotMotion& m);
retarget::RobotMotion to_robot_motion(const MotionSample& s);
MotionSample from_actions(const retarget::ActionSequence& a);
retarget::ActionSequence to_actions(const MotionSample& s);
MotionSample from_tokens(const tokenizer::TokenSequence& t);
tokenizer::TokenSequence to_tokens(const MotionSample& s);
MotionSample from_trajectory(const control::Trajectory& t);

}  // namespace hmx::io
