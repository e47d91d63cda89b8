#pragma once

#include <cstdint>
#include <string_view>
#include <utility>

namespace hmx::numerics {

// SplitMix64: state advances by the golden-ratio increment and each output is
// the standard 64-bit finalizer of the new state. Only integer arithmetic is
// involved, so streams are identical on every platform.
class Prng {
 public:
  constexpr explicit Prng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0. Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via Box-Muller (no cached second draw, so the stream stays
  // a pure function of the state).
  double normal() noexcept;

  // Independent sub-stream keyed by a label or index. Does not advance *this.
  Prng split(std::string_view label) const noexcept;
  Prng split(std::uint64_t index) const noexcept;

  std::uint64_t state() const noexcept { return state_; }
  friend bool operator==(const Prng&, const Prng&) = default;

 private:
  std::uint64_t state_;
};

// Functional form: returns the draw and the advanced generator.
std::pair<double, Prng> prng_uniform(Prng p) noexcept;

// FNV-1a, used for labels and content hashes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace hmx::numerics
