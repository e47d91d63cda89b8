#include "hmx/nn/conv_stack.hpp"

#include <algorithm>
#include <cmath>

#include "hmx/error.hpp"

namespace hmx::nn {

void ConvStack::conv(ParamStore& p, const std::string& prefix, std::size_t out, std::size_t kernel,
                     std::size_t stride, std::size_t pad) {
  Layer l;
  l.kind = Kind::Conv;
  l.conv = Conv1dShape{channels_, out, kernel, stride, pad};
  l.w = p.add(prefix + ".w", {out, kernel, channels_});
  l.b = p.add(prefix + ".b", {out});
  layers_.push_back(l);
  channels_ = out;
}

void ConvStack::relu() { layers_.push_back(Layer{Kind::Relu, {}, {}, 0, 0, 0, 0}); }

void ConvStack::upsample2() { layers_.push_back(Layer{Kind::Upsample2, {}, {}, 0, 0, 0, 0}); }

void ConvStack::norm() { layers_.push_back(Layer{Kind::Norm, {}, {}, 0, 0, 0, 0}); }

void ConvStack::resblock(ParamStore& p, const std::string& prefix) {
  Layer l;
  l.kind = Kind::ResBlock;
  l.conv = Conv1dShape{channels_, channels_, 3, 1, 1};
  l.conv2 = Conv1dShape{channels_, channels_, 1, 1, 0};
  l.w = p.add(prefix + ".conv1.w", {channels_, 3, channels_});
  l.b = p.add(prefix + ".conv1.b", {channels_});
  l.w2 = p.add(prefix + ".conv2.w", {channels_, 1, channels_});
  l.b2 = p.add(prefix + ".conv2.b", {channels_});
  layers_.push_back(l);
}

std::size_t ConvStack::out_len(std::size_t len) const {
  for (const auto& l : layers_) {
    if (l.kind == Kind::Conv) len = l.conv.out_len(len);
    if (l.kind == Kind::Upsample2) len *= 2;
  }
  return len;
}

void ConvStack::init(ParamStore& p, numerics::Prng& rng) const {
  for (const auto& l : layers_) {
    if (l.kind == Kind::Conv || l.kind == Kind::ResBlock) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.conv.kernel * l.conv.in));
      p.init_uniform(l.w, bound, rng);
      p.init_uniform(l.b, bound, rng);
    }
    if (l.kind == Kind::ResBlock) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.conv2.in));
      p.init_uniform(l.w2, bound, rng);
      p.init_uniform(l.b2, bound, rng);
    }
  }
}

std::vector<double> ConvStack::forward(const ParamStore& p, std::span<const double> x, std::size_t len,
                                       Tape* tape) const {
  if (x.size() != len * in_channels_)
    throw DimensionError("conv stack: input has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(len) + " x " + std::to_string(in_channels_));
  if (tape) tape->entries.assign(layers_.size(), {});
  std::vector<double> cur(x.begin(), x.end());
  std::size_t ch = in_channels_;
  std::vector<double> scratch_cols, scratch_cols2;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Tape::Entry* e = tape ? &tape->entries[i] : nullptr;
    if (e) {
      e->len = len;
      e->input = cur;
    }
    std::vector<double> next;
    switch (l.kind) {
      case Kind::Conv: {
        const std::size_t lo = l.conv.out_len(len);
        next.assign(lo * l.conv.out, 0.0);
        auto& cols = e ? e->cols : scratch_cols;
        conv1d_forward(l.conv, len, cur, p[l.w], p[l.b], cols, next);
        len = lo;
        ch = l.conv.out;
        break;
      }
      case Kind::Relu:
        next.resize(cur.size());
        relu_forward(cur, next);
        break;
      case Kind::Upsample2:
        next.resize(cur.size() * 2);
        for (std::size_t t = 0; t < len; ++t)
          for (std::size_t r = 0; r < 2; ++r)
            std::copy_n(cur.begin() + static_cast<std::ptrdiff_t>(t * ch), ch,
                        next.begin() + static_cast<std::ptrdiff_t>((2 * t + r) * ch));
        len *= 2;
        break;
      case Kind::ResBlock: {
        std::vector<double> h1(cur.size()), h2(cur.size()), h3(cur.size());
        relu_forward(cur, h1);
        conv1d_forward(l.conv, len, h1, p[l.w], p[l.b], e ? e->cols : scratch_cols, h2);
        relu_forward(h2, h3);
        next.assign(cur.size(), 0.0);
        conv1d_forward(l.conv2, len, h3, p[l.w2], p[l.b2], e ? e->cols2 : scratch_cols2, next);
        for (std::size_t j = 0; j < next.size(); ++j) next[j] += cur[j];
        if (e) {
          e->h2 = std::move(h2);
          e->h3 = std::move(h3);
        }
        break;
      }
      case Kind::Norm: {
        next.resize(cur.size());
        const std::vector<double> ones(ch, 1.0), zeros(ch, 0.0);
        std::vector<double> mean(len), rstd(len);
        layernorm_forward(len, ch, cur, ones, zeros, next, mean, rstd);
        if (e) {
          e->h2 = std::move(mean);
          e->h3 = std::move(rstd);
        }
        break;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> ConvStack::backward(const ParamStore& p, const Tape& tape, std::span<const double> dy,
                                        std::span<double> grad) const {
  if (tape.entries.size() != layers_.size()) throw Error("conv stack: tape does not match the stack");
  std::vector<double> d(dy.begin(), dy.end());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    const auto& e = tape.entries[i];
    std::vector<double> dx(e.input.size(), 0.0);
    switch (l.kind) {
      case Kind::Conv:
        conv1d_backward(l.conv, e.len, e.cols, p[l.w], d, p.in(grad, l.w), p.in(grad, l.b), dx);
        break;
      case Kind::Relu:
        relu_backward(e.input, d, dx);
        break;
      case Kind::Upsample2: {
        const std::size_t ch = e.input.size() / e.len;
        for (std::size_t t = 0; t < e.len; ++t)
          for (std::size_t c = 0; c < ch; ++c) dx[t * ch + c] = d[(2 * t) * ch + c] + d[(2 * t + 1) * ch + c];
        break;
      }
      case Kind::ResBlock: {
        std::vector<double> dh3(d.size(), 0.0), dh2(d.size(), 0.0), dh1(d.size(), 0.0);
        conv1d_backward(l.conv2, e.len, e.cols2, p[l.w2], d, p.in(grad, l.w2), p.in(grad, l.b2), dh3);
        relu_backward(e.h2, dh3, dh2);
        conv1d_backward(l.conv, e.len, e.cols, p[l.w], dh2, p.in(grad, l.w), p.in(grad, l.b), dh1);
        dx = d;
        relu_backward(e.input, dh1, dx);
        break;
      }
      case Kind::Norm: {
        const std::size_t ch = e.input.size() / e.len;
        const std::vector<double> ones(ch, 1.0);
        std::vector<double> dg(ch), db(ch);
        layernorm_backward(e.len, ch, e.input, ones, e.h2, e.h3, d, dg, db, dx);
        break;
      }
    }
    d = std::move(dx);
  }
  return d;
}

}  // namespace hmx::nn
