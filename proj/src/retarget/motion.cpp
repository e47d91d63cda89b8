#include "hmx/retarget/motion.hpp"

#include <cmath>
#include <string>

#include "hmx/error.hpp"

namespace hmx::retarget {

void HumanPoseSequence::validate(const body::HumanBodyModel& model) const {
  if (t_root.empty()) throw ValidationError("pose: at least one frame required");
  if (fps != kPoseFps) throw ValidationError("pose: fps must be 20, got " + std::to_string(fps));
  if (theta.size() != t_root.size())
    throw DimensionError("pose: theta has " + std::to_string(theta.size()) + " frames, t_root has " +
                         std::to_string(t_root.size()));
  if (beta.size() != static_cast<std::size_t>(model.n_beta()))
    throw DimensionError("pose: beta has " + std::to_string(beta.size()) + " entries, model expects " +
                         std::to_string(model.n_beta()));
  body::check_beta(model, beta);
  for (std::size_t f = 0; f < theta.size(); ++f) {
    if (theta[f].size() != model.joint_count())
      throw DimensionError("pose: frame " + std::to_string(f) + " has " + std::to_string(theta[f].size()) +
                           " joint rotations, model has " + std::to_string(model.joint_count()));
    for (const Vec3& r : theta[f])
      if (!r.allFinite()) throw ValidationError("pose: non-finite theta at frame " + std::to_string(f));
    if (!t_root[f].allFinite()) throw ValidationError("pose: non-finite t_root at frame " + std::to_string(f));
  }
}

}  // namespace hmx::retarget
