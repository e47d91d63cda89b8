#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hmx/nn/layers.hpp"
#include "hmx/nn/params.hpp"

namespace hmx::nn {

// A feed-forward stack of 1-D layers over (length x channels) activations.
class ConvStack {
 public:
  enum class Kind { Conv, Relu, Upsample2, ResBlock, Norm };

  struct Layer {
    Kind kind = Kind::Relu;
    Conv1dShape conv;   // Conv, and the k3 conv of a ResBlock
    Conv1dShape conv2;  // k1 conv of a ResBlock
    std::size_t w = 0, b = 0, w2 = 0, b2 = 0;
  };

  // Per-layer activations saved by forward() for backward().
  struct Tape {
    struct Entry {
      std::size_t len = 0;
      std::vector<double> input;
      std::vector<double> cols, cols2, h2, h3;
    };
    std::vector<Entry> entries;
  };

  ConvStack() = default;
  explicit ConvStack(std::size_t in_channels) : in_channels_(in_channels), channels_(in_channels) {}

  // Builders register parameters under `prefix`.
  void conv(ParamStore& p, const std::string& prefix, std::size_t out, std::size_t kernel, std::size_t stride,
            std::size_t pad);
  void relu();
  void upsample2();
  // Per-position normalization over channels to zero mean, unit variance.
  void norm();
  // x + conv1(relu(conv3(relu(x)))), channels unchanged.
  void resblock(ParamStore& p, const std::string& prefix);

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return channels_; }
  std::size_t out_len(std::size_t len) const;
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // x is len x in_channels. Returns out_len x out_channels. tape may be null.
  std::vector<double> forward(const ParamStore& p, std::span<const double> x, std::size_t len, Tape* tape) const;
  // Accumulates parameter gradients into grad (laid out like p.values());
  // returns dL/dx.
  std::vector<double> backward(const ParamStore& p, const Tape& tape, std::span<const double> dy,
                               std::span<double> grad) const;

  // PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
  // weights and biases.
  void init(ParamStore& p, numerics::Prng& rng) const;

 private:
  std::size_t in_channels_ = 0;
  std::size_t channels_ = 0;
  std::vector<Layer> layers_;
};

}  // namespace hmx::nn
