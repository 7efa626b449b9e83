#pragma once

#include <cstddef>

namespace hbrw::simd::detail {

double versine_sum_scalar(int d, const double* theta, const double* coords, const double* w,
                          std::size_t n);
void pair_axpy_scalar(double* y, const double* xp, const double* xm, double c, std::size_t n);
void axpy_scalar(double* y, const double* x, double c, std::size_t n);
void scale_complex_scalar(double* data, const double* s, std::size_t n);

#if defined(HBRW_HAVE_AVX2)
double versine_sum_avx2(int d, const double* theta, const double* coords, const double* w,
                        std::size_t n);
void pair_axpy_avx2(double* y, const double* xp, const double* xm, double c, std::size_t n);
void axpy_avx2(double* y, const double* x, double c, std::size_t n);
void scale_complex_avx2(double* data, const double* s, std::size_t n);
#endif

}  // namespace hbrw::simd::detail
