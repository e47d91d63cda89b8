#include "hmx/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hmx/error.hpp"
#include "hmx/simd/kernels.hpp"
#include "hmx/simd/linalg.hpp"

namespace hmx::nn {

void linear_forward(std::size_t n, std::size_t in, std::size_t out, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y) {
  for (std::size_t r = 0; r < n; ++r) std::copy(b.begin(), b.end(), y.begin() + static_cast<std::ptrdiff_t>(r * out));
  simd::gemm_nt(n, in, out, x, w, y);
}

void linear_backward(std::size_t n, std::size_t in, std::size_t out, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx) {
  simd::gemm_tn(out, n, in, dy, x, dw);
  for (std::size_t r = 0; r < n; ++r) simd::axpy(1.0, dy.subspan(r * out, out), db);
  if (!dx.empty()) simd::gemm_nn(n, out, in, dy, w, dx);
}

std::size_t Conv1dShape::out_len(std::size_t len) const {
  if (len + 2 * pad < kernel)
    throw DimensionError("conv1d: input length " + std::to_string(len) + " shorter than kernel");
  return (len + 2 * pad - kernel) / stride + 1;
}

void conv1d_forward(const Conv1dShape& s, std::size_t len, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::vector<double>& cols, std::span<double> y) {
  const std::size_t lo = s.out_len(len);
  const std::size_t width = s.kernel * s.in;
  cols.assign(lo * width, 0.0);
  for (std::size_t t = 0; t < lo; ++t) {
    for (std::size_t k = 0; k < s.kernel; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * s.stride + k) - static_cast<std::ptrdiff_t>(s.pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(x.begin() + src * static_cast<std::ptrdiff_t>(s.in), s.in,
                  cols.begin() + static_cast<std::ptrdiff_t>(t * width + k * s.in));
    }
  }
  linear_forward(lo, width, s.out, cols, w, b, y);
}

void conv1d_backward(const Conv1dShape& s, std::size_t len, std::span<const double> cols,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dw,
                     std::span<double> db, std::span<double> dx) {
  const std::size_t lo = s.out_len(len);
  const std::size_t width = s.kernel * s.in;
  if (dx.empty()) {
    linear_backward(lo, width, s.out, cols, w, dy, dw, db, {});
    return;
  }
  std::vector<double> dcols(lo * width, 0.0);
  linear_backward(lo, width, s.out, cols, w, dy, dw, db, dcols);
  for (std::size_t t = 0; t < lo; ++t) {
    for (std::size_t k = 0; k < s.kernel; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * s.stride + k) - static_cast<std::ptrdiff_t>(s.pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      simd::axpy(1.0, std::span<const double>(dcols).subspan(t * width + k * s.in, s.in),
                 dx.subspan(static_cast<std::size_t>(src) * s.in, s.in));
    }
  }
}

void relu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

double gelu(double x) noexcept {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) noexcept {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

void layernorm_forward(std::size_t n, std::size_t dim, std::span<const double> x, std::span<const double> g,
                       std::span<const double> b, std::span<double> y, std::span<double> mean,
                       std::span<double> rstd, double eps) {
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * dim;
    double m = 0.0;
    for (std::size_t i = 0; i < dim; ++i) m += xr[i];
    m /= static_cast<double>(dim);
    double v = 0.0;
    for (std::size_t i = 0; i < dim; ++i) v += (xr[i] - m) * (xr[i] - m);
    v /= static_cast<double>(dim);
    const double rs = 1.0 / std::sqrt(v + eps);
    mean[r] = m;
    rstd[r] = rs;
    for (std::size_t i = 0; i < dim; ++i) y[r * dim + i] = (xr[i] - m) * rs * g[i] + b[i];
  }
}

void layernorm_backward(std::size_t n, std::size_t dim, std::span<const double> x, std::span<const double> g,
                        std::span<const double> mean, std::span<const double> rstd, std::span<const double> dy,
                        std::span<double> dg, std::span<double> db, std::span<double> dx) {
  const double inv = 1.0 / static_cast<double>(dim);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * dim;
    const double* dyr = dy.data() + r * dim;
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double xh = (xr[i] - mean[r]) * rstd[r];
      const double dxh = dyr[i] * g[i];
      dg[i] += dyr[i] * xh;
      db[i] += dyr[i];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * xh;
    }
    for (std::size_t i = 0; i < dim; ++i) {
      const double xh = (xr[i] - mean[r]) * rstd[r];
      const double dxh = dyr[i] * g[i];
      dx[r * dim + i] += rstd[r] * (dxh - inv * sum_dxh - xh * inv * sum_dxh_xh);
    }
  }
}

void softmax_inplace(std::span<double> row) noexcept {
  const double m = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double& v : row) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : row) v /= s;
}

double log_sum_exp(std::span<const double> row) noexcept {
  const double m = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace hmx::nn
