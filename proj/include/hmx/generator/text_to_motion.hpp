#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "hmx/generator/gpt.hpp"
#include "hmx/retarget/motion.hpp"
#include "hmx/tokenizer/tokenizer.hpp"

namespace hmx::generator {

enum class MotionMode { Keypoint, Action };

std::string_view mode_name(MotionMode m) noexcept;
// Throws ValidationError on anything but "keypoint" / "action".
MotionMode parse_mode(std::string_view s);

// Channel layout of the keypoint-mode tokenizer input: 36 keypoint
// coordinates relative to the hip midpoint, then the hip midpoint velocity
// (m/s, 3 channels). Frame 0 repeats the velocity of frame 1.
inline constexpr std::size_t kKeypointFeatureDim = 39;
inline constexpr std::size_t kKeypointRootChannels = 3;

retarget::Matrix keypoint_features(const retarget::KeypointSequence& seq);
// Inverse of keypoint_features given the hip midpoint of frame 0.
retarget::KeypointSequence keypoints_from_features(const retarget::Matrix& features, const numerics::Vec3& start_root,
                                                   double fps = retarget::kPoseFps);

struct MotionModels {
  const tokenizer::Tokenizer* tokenizer = nullptr;
  const Gpt* gpt = nullptr;
  std::string embedder_name;        // as recorded in the generator file
  std::uint64_t tokenizer_hash = 0; // as recorded in the generator file
};

struct GeneratedMotion {
  MotionMode mode = MotionMode::Action;
  std::vector<int> tokens;        // generated codebook indices, End excluded
  std::size_t dropped_tokens = 0; // trailing tokens short of a whole window
  std::optional<retarget::KeypointSequence> keypoints;
  std::optional<retarget::ActionSequence> actions;
};

// Generates tokens for `text` and decodes every complete window. Throws
// ValidationError when the tokenizer hash, vocabulary, embedder or channel
// layout does not fit the requested mode.
GeneratedMotion text_to_motion(std::string_view text, MotionMode mode, const MotionModels& models,
                               const Sampling& sampling, std::size_t max_tokens, std::uint64_t seed,
                               const numerics::Vec3& start_root = {0.0, 0.0, 0.0});

}  // namespace hmx::generator
