#include "hmx/nn/params.hpp"

#include <algorithm>

#include "hmx/error.hpp"
#include "hmx/io/binary.hpp"

namespace hmx::nn {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  for (const auto& s : slots_)
    if (s.name == name) throw ValidationError("duplicate parameter name '" + name + "'");
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  slots_.push_back(Slot{std::move(name), std::move(shape), values_.size(), n});
  values_.resize(values_.size() + n, 0.0);
  return slots_.size() - 1;
}

std::span<double> ParamStore::operator[](std::size_t slot) noexcept {
  const auto& s = slots_[slot];
  return {values_.data() + s.offset, s.size};
}

std::span<const double> ParamStore::operator[](std::size_t slot) const noexcept {
  const auto& s = slots_[slot];
  return {values_.data() + s.offset, s.size};
}

std::span<double> ParamStore::in(std::span<double> buffer, std::size_t slot) const noexcept {
  const auto& s = slots_[slot];
  return buffer.subspan(s.offset, s.size);
}

void ParamStore::init_uniform(std::size_t slot, double bound, numerics::Prng& rng) {
  for (double& v : (*this)[slot]) v = rng.uniform(-bound, bound);
}

void ParamStore::fill(std::size_t slot, double v) {
  auto s = (*this)[slot];
  std::fill(s.begin(), s.end(), v);
}

void ParamStore::write(io::BinaryWriter& w) const {
  w.u64(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& s = slots_[i];
    w.string(s.name);
    w.u64(s.shape.size());
    for (auto d : s.shape) w.u64(d);
    w.f32_array((*this)[i]);
  }
}

void ParamStore::read(io::BinaryReader& r) {
  const auto count = r.u64();
  if (count != slots_.size())
    r.fail("expected " + std::to_string(slots_.size()) + " parameter tensors, found " + std::to_string(count));
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& s = slots_[i];
    const std::string name = r.string();
    if (name != s.name) r.fail("expected parameter '" + s.name + "', found '" + name + "'");
    const auto rank = r.u64();
    if (rank != s.shape.size()) r.fail("parameter '" + name + "' has wrong rank");
    for (auto d : s.shape)
      if (r.u64() != d) r.fail("parameter '" + name + "' has wrong shape");
    const auto v = r.f32_array();
    if (v.size() != s.size) r.fail("parameter '" + name + "' has wrong element count");
    std::copy(v.begin(), v.end(), (*this)[i].begin());
  }
}

}  // namespace hmx::nn
