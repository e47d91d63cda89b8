#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace hmx::body {

// The 12 joints shared by the human and robot skeletons, in canonical order.
inline constexpr std::size_t kKeypointCount = 12;
inline constexpr std::array<std::string_view, kKeypointCount> kKeypointNames = {
    "left_hip",      "right_hip",      "left_knee",  "right_knee",  "left_ankle", "right_ankle",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist"};

// Shoulders, elbows, wrists: the 6 upper-body keypoints (18 coordinates) the
// keypoint imitation reward tracks.
inline constexpr std::array<std::size_t, 6> kUpperBodyKeypoints = {6, 7, 8, 9, 10, 11};

inline constexpr std::size_t kRobotDofCount = 27;

}  // namespace hmx::body
