#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// on x86-64, an AVX2+FMA version selected at runtime. The two are required to
// agree to a few ulps per term (see tests/unit/test_simd.cpp).

#include <cstddef>
#include <string_view>

namespace hbrw::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  // sum_j w[j] * 2 sin^2(<theta, z_j> / 2) with coordinates stored as d
  // contiguous arrays of length n (coords[k*n + j] is component k of z_j).
  double (*versine_sum)(int d, const double* theta, const double* coords, const double* w,
                        std::size_t n);

  // y[i] += c * (xp[i] + xm[i])
  void (*pair_axpy)(double* y, const double* xp, const double* xm, double c, std::size_t n);

  // y[i] += c * x[i]
  void (*axpy)(double* y, const double* x, double c, std::size_t n);

  // interleaved complex data[2i], data[2i+1] scaled by real s[i]
  void (*scale_complex)(double* data, const double* s, std::size_t n);
};

// Kernels for the best ISA supported by this CPU (or the forced one).
const KernelTable& kernels();

// Kernels for a specific ISA; throws if the CPU does not support it.
const KernelTable& kernels(Isa isa);

bool supported(Isa isa);
Isa best_isa();

// Pins dispatch to `isa` for the rest of the process (CLI --simd flag).
void force_isa(Isa isa);

}  // namespace hbrw::simd
