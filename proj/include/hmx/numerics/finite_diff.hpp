#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hmx::numerics {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). Test oracle
// only; production gradients are analytic. Throws NumericError when an
// evaluation is non-finite.
std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> x, double eps);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

}  // namespace hmx::numerics
