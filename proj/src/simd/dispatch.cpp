#include "hbrw/simd.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace hbrw::simd {

namespace {

constexpr KernelTable kScalar{Isa::scalar, detail::versine_sum_scalar, detail::pair_axpy_scalar,
                              detail::axpy_scalar, detail::scale_complex_scalar};

#if defined(HBRW_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, detail::versine_sum_avx2, detail::pair_axpy_avx2,
                            detail::axpy_avx2, detail::scale_complex_avx2};
#endif

// -1: not forced
std::atomic<int> g_forced{-1};

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(HBRW_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() {
  const int forced = g_forced.load(std::memory_order_relaxed);
  if (forced >= 0) return static_cast<Isa>(forced);
  return supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

void force_isa(Isa isa) {
  if (!supported(isa))
    throw std::invalid_argument("simd: ISA '" + std::string(isa_name(isa)) +
                                "' not supported on this CPU");
  g_forced.store(static_cast<int>(isa), std::memory_order_relaxed);
}

const KernelTable& kernels(Isa isa) {
  if (!supported(isa))
    throw std::invalid_argument("simd: ISA '" + std::string(isa_name(isa)) +
                                "' not supported on this CPU");
#if defined(HBRW_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& kernels() { return kernels(best_isa()); }

}  // namespace hbrw::simd
