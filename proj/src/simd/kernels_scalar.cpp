#include "kernels_internal.hpp"

#include <cmath>

namespace hbrw::simd::detail {

namespace {

double dot_theta(int d, const double* theta, const double* coords, std::size_t n, std::size_t j) {
  double arg = theta[0] * coords[j];
  for (int k = 1; k < d; ++k) arg += theta[k] * coords[k * n + j];
  return arg;
}

}  // namespace

double versine_sum_scalar(int d, const double* theta, const double* coords, const double* w,
                          std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double s = std::sin(0.5 * dot_theta(d, theta, coords, n, j));
    acc += w[j] * (2.0 * s * s);
  }
  return acc;
}

void pair_axpy_scalar(double* y, const double* xp, const double* xm, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * (xp[i] + xm[i]);
}

void axpy_scalar(double* y, const double* x, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

void scale_complex_scalar(double* data, const double* s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    data[2 * i] *= s[i];
    data[2 * i + 1] *= s[i];
  }
}

}  // namespace hbrw::simd::detail
