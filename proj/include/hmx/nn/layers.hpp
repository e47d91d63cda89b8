#pragma once

// Forward/backward primitives on row-major activations (rows = positions,
// columns = channels). Backward functions accumulate into gradient buffers.

#include <cstddef>
#include <span>
#include <vector>

namespace hmx::nn {

// y[n x out] = x[n x in] * W^T + b, W is out x in.
void linear_forward(std::size_t n, std::size_t in, std::size_t out, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y);
// dW += dy^T x, db += column sums of dy, dx += dy W (dx may be empty).
void linear_backward(std::size_t n, std::size_t in, std::size_t out, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx);

struct Conv1dShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_len(std::size_t len) const;  // throws DimensionError when len is too short
  std::size_t weight_size() const noexcept { return out * kernel * in; }
};

// Zero-padded 1-D convolution. W is out x (kernel * in) with column index
// k * in + c. `cols` receives the im2col buffer needed by the backward pass.
void conv1d_forward(const Conv1dShape& s, std::size_t len, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::vector<double>& cols, std::span<double> y);
void conv1d_backward(const Conv1dShape& s, std::size_t len, std::span<const double> cols,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx);

void relu_forward(std::span<const double> x, std::span<double> y);
// dx += dy where x > 0.
void relu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

// tanh approximation of GELU.
double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;

// Row-wise layer normalization with gain g and bias b (both of width `dim`).
// mean/rstd receive per-row statistics for the backward pass.
void layernorm_forward(std::size_t n, std::size_t dim, std::span<const double> x, std::span<const double> g,
                       std::span<const double> b, std::span<double> y, std::span<double> mean,
                       std::span<double> rstd, double eps = 1e-5);
void layernorm_backward(std::size_t n, std::size_t dim, std::span<const double> x, std::span<const double> g,
                        std::span<const double> mean, std::span<const double> rstd, std::span<const double> dy,
                        std::span<double> dg, std::span<double> db, std::span<double> dx);

// In-place numerically stable softmax over one row.
void softmax_inplace(std::span<double> row) noexcept;
double log_sum_exp(std::span<const double> row) noexcept;

}  // namespace hmx::nn
