#pragma once

#include <cstdint>
#include <vector>

#include "hmx/body/robot_model.hpp"
#include "hmx/numerics/matrix.hpp"

namespace hmx::tokenizer {

// Synthetic 50 fps DoF trajectories: every DoF oscillates around its default
// at a per-sequence frequency (0.6-1.4 Hz), phase and amplitude scale, with a
// fixed per-DoF amplitude and phase pattern (right side in antiphase). Values
// stay inside the joint limits.
std::vector<numerics::Matrix> sinusoid_action_dataset(const body::RobotModel& robot, std::size_t count,
                                                      std::size_t frames, std::uint64_t seed);

}  // namespace hmx::tokenizer
