// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "kernels_internal.hpp"

#include <immintrin.h>

#include <cmath>

namespace hbrw::simd::detail {

namespace {

// pi/2 split: the high part has 33 significant bits so k * kPio2Hi is exact
// for |k| < 2^20, which covers every argument the lattice sums produce.
constexpr double kPio2Hi = 1.57079632673412561417e+00;
constexpr double kPio2Lo = 6.07710050650619224932e-11;
constexpr double kTwoOverPi = 6.36619772367581382433e-01;

// Minimax coefficients on [-pi/4, pi/4] (Cephes).
constexpr double kSin[] = {1.58962301576546568060E-10, -2.50507477628578072866E-8,
                           2.75573136213857245213E-6,  -1.98412698295895385996E-4,
                           8.33333333332211858878E-3,  -1.66666666666666307295E-1};
constexpr double kCos[] = {-1.13585365213876817300E-11, 2.08757008419747316778E-9,
                           -2.75573141792967388112E-7,  2.48015872888517045348E-5,
                           -1.38888888888730564116E-3,  4.16666666666665929218E-2};

inline __m256d horner(__m256d z, const double* c) {
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 6; ++i) p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(c[i]));
  return p;
}

// sin^2(x). Only the parity of the quadrant matters, the sign drops out.
inline __m256d sin_squared(__m256d x) {
  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kTwoOverPi)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kPio2Hi), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kPio2Lo), r);
  const __m256d z = _mm256_mul_pd(r, r);

  const __m256d s = _mm256_fmadd_pd(_mm256_mul_pd(r, z), horner(z, kSin), r);
  const __m256d c = _mm256_fmadd_pd(_mm256_mul_pd(z, z), horner(z, kCos),
                                    _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, _mm256_set1_pd(1.0)));

  const __m256d half = _mm256_mul_pd(k, _mm256_set1_pd(0.5));
  const __m256d odd = _mm256_cmp_pd(half, _mm256_floor_pd(half), _CMP_NEQ_OQ);
  const __m256d v = _mm256_blendv_pd(s, c, odd);
  return _mm256_mul_pd(v, v);
}

inline __m256d argument(int d, const double* theta, const double* coords, std::size_t n,
                        std::size_t j) {
  __m256d arg = _mm256_mul_pd(_mm256_set1_pd(theta[0]), _mm256_loadu_pd(coords + j));
  for (int k = 1; k < d; ++k)
    arg = _mm256_fmadd_pd(_mm256_set1_pd(theta[k]), _mm256_loadu_pd(coords + k * n + j), arg);
  return arg;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double versine_sum_avx2(int d, const double* theta, const double* coords, const double* w,
                        std::size_t n) {
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d two = _mm256_set1_pd(2.0);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256d s0 = sin_squared(_mm256_mul_pd(half, argument(d, theta, coords, n, j)));
    const __m256d s1 = sin_squared(_mm256_mul_pd(half, argument(d, theta, coords, n, j + 4)));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(two, s0), _mm256_loadu_pd(w + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_mul_pd(two, s1), _mm256_loadu_pd(w + j + 4), acc1);
  }
  for (; j + 4 <= n; j += 4) {
    const __m256d s0 = sin_squared(_mm256_mul_pd(half, argument(d, theta, coords, n, j)));
    acc0 = _mm256_fmadd_pd(_mm256_mul_pd(two, s0), _mm256_loadu_pd(w + j), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) {
    double arg = theta[0] * coords[j];
    for (int k = 1; k < d; ++k) arg += theta[k] * coords[k * n + j];
    const double s = std::sin(0.5 * arg);
    acc += w[j] * (2.0 * s * s);
  }
  return acc;
}

void pair_axpy_avx2(double* y, const double* xp, const double* xm, double c, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d sum = _mm256_add_pd(_mm256_loadu_pd(xp + i), _mm256_loadu_pd(xm + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vc, sum, _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += c * (xp[i] + xm[i]);
}

void axpy_avx2(double* y, const double* x, double c, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vc, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += c * x[i];
}

void scale_complex_avx2(double* data, const double* s, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    // (s0, s0, s1, s1)
    const __m128d pair = _mm_loadu_pd(s + i);
    const __m256d dup = _mm256_permute4x64_pd(_mm256_castpd128_pd256(pair), 0b01010000);
    _mm256_storeu_pd(data + 2 * i, _mm256_mul_pd(_mm256_loadu_pd(data + 2 * i), dup));
  }
  for (; i < n; ++i) {
    data[2 * i] *= s[i];
    data[2 * i + 1] *= s[i];
  }
}

}  // namespace hbrw::simd::detail
