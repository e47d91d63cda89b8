#include "hmx/tokenizer/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hmx/error.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::tokenizer {

std::vector<numerics::Matrix> sinusoid_action_dataset(const body::RobotModel& robot, std::size_t count,
                                                      std::size_t frames, std::uint64_t seed) {
  if (count == 0 || frames == 0) throw ValidationError("sinusoid dataset: count and frames must be >= 1");
  const std::size_t nd = robot.dof_count();
  const auto defaults = robot.default_pose();
  std::vector<double> amp(nd), shift(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& dof = robot.dofs()[d];
    const double room = std::min(dof.max - defaults[d], defaults[d] - dof.min);
    amp[d] = std::min(0.6, 0.8 * room);
    const bool right = dof.name.rfind("right_", 0) == 0;
    shift[d] = 0.3 * static_cast<double>(d % 7) + (right ? std::numbers::pi : 0.0);
  }
  numerics::Prng rng(seed);
  std::vector<numerics::Matrix> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double freq = rng.uniform(0.6, 1.4);
    const double scale = rng.uniform(0.4, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    numerics::Matrix q(frames, nd);
    for (std::size_t f = 0; f < frames; ++f) {
      const double t = static_cast<double>(f) / 50.0;
      for (std::size_t d = 0; d < nd; ++d) {
        const auto& dof = robot.dofs()[d];
        const double v = defaults[d] + scale * amp[d] * std::sin(2.0 * std::numbers::pi * freq * t + phase + shift[d]);
        q(f, d) = std::clamp(v, dof.min, dof.max);
      }
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace hmx::tokenizer
