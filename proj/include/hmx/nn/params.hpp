#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hmx/numerics/prng.hpp"

namespace hmx::io {
class BinaryWriter;
class BinaryReader;
}  // namespace hmx::io

namespace hmx::nn {

// Named parameter tensors packed into one flat vector, so a single optimizer
// and a single gradient buffer cover a whole network.
class ParamStore {
 public:
  struct Slot {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  // Returns the slot id. Names must be unique.
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> operator[](std::size_t slot) noexcept;
  std::span<const double> operator[](std::size_t slot) const noexcept;
  // Same slot inside a gradient buffer laid out like values().
  std::span<double> in(std::span<double> buffer, std::size_t slot) const noexcept;

  // Uniform(-bound, bound) fill of one slot.
  void init_uniform(std::size_t slot, double bound, numerics::Prng& rng);
  void fill(std::size_t slot, double v);

  // Writes slot count, then per slot: name, shape, f32 values.
  void write(io::BinaryWriter& w) const;
  // Reads values into an identically laid out store; mismatched names or
  // shapes are a ParseError.
  void read(io::BinaryReader& r);

 private:
  std::vector<Slot> slots_;
  std::vector<double> values_;
};

}  // namespace hmx::nn
