#include "hbrw/lattice.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "hbrw/error.hpp"
#include "hbrw/simd.hpp"

namespace hbrw {

TruncatedLattice::TruncatedLattice(int d, int radius) : d_(d), radius_(radius), size_(1) {
  if (d < 1 || d > kMaxDim) throw InvalidArgument("lattice: d must be 1, 2 or 3");
  if (radius < 0) throw InvalidArgument("lattice: radius must be >= 0");
  for (int k = 0; k < d; ++k) {
    size_ *= static_cast<std::size_t>(side());
    if (size_ > (std::size_t{1} << 31)) throw InvalidArgument("lattice: box too large");
  }
}

bool TruncatedLattice::contains(const Site& x) const {
  for (int k = 0; k < d_; ++k)
    if (std::abs(x[k]) > radius_) return false;
  for (int k = d_; k < kMaxDim; ++k)
    if (x[k] != 0) return false;
  return true;
}

std::size_t TruncatedLattice::index(const Site& x) const {
  if (!contains(x)) throw InvalidArgument("lattice: site outside the box");
  std::size_t i = 0;
  for (int k = 0; k < d_; ++k) i = i * side() + static_cast<std::size_t>(x[k] + radius_);
  return i;
}

Site TruncatedLattice::site(std::size_t index) const {
  if (index >= size_) throw InvalidArgument("lattice: index out of range");
  Site x{};
  for (int k = d_ - 1; k >= 0; --k) {
    x[k] = static_cast<int>(index % side()) - radius_;
    index /= side();
  }
  return x;
}

// --- FFT backend -------------------------------------------------------------

namespace {

// Planner calls are not thread-safe in FFTW.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

int fft_friendly(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int f : {2, 3, 5, 7})
      while (r % f == 0) r /= f;
    if (r == 1) return m;
  }
}

}  // namespace

struct BoxOperator::Fft {
  int m = 0;            // padded length per dimension
  std::size_t real_n = 0;
  std::size_t complex_n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  std::vector<double> symbol;  // real spectrum of the kernel, normalized
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  ~Fft() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec);
  }
};

BoxOperator::BoxOperator(const TransitionKernel& kernel, const TruncatedLattice& lattice, Method method)
    : lattice_(lattice), method_(method), a0_(kernel.a0()) {
  if (kernel.d() != lattice.d()) throw InvalidArgument("box operator: kernel and lattice dimensions differ");
  const int d = lattice.d();
  const int diam = 2 * lattice.radius();
  for (std::size_t j = 0; j < kernel.half_size(); ++j) {
    const Site& z = kernel.half_sites()[j];
    bool inside = true;
    for (int k = 0; k < d; ++k) inside = inside && std::abs(z[k]) <= diam;
    if (!inside) continue;
    offsets_.push_back(z);
    rates_.push_back(kernel.half_rate(j));
  }

  const int m = fft_friendly(2 * lattice.side() - 1);
  if (method_ == Method::automatic) {
    const double n = static_cast<double>(lattice.size());
    const double direct = 2.0 * n * static_cast<double>(offsets_.size());
    const double padded = std::pow(static_cast<double>(m), d);
    const double fft = 6.0 * padded * std::log2(std::max(padded, 2.0));
    method_ = direct > fft ? Method::fft : Method::direct;
  }

  if (method_ == Method::fft) {
    fft_ = std::make_unique<Fft>();
    auto& f = *fft_;
    f.m = m;
    f.real_n = 1;
    for (int k = 0; k < d; ++k) f.real_n *= static_cast<std::size_t>(m);
    f.complex_n = f.real_n / static_cast<std::size_t>(m) * static_cast<std::size_t>(m / 2 + 1);
    f.real = fftw_alloc_real(f.real_n);
    f.spec = fftw_alloc_complex(f.complex_n);
    std::vector<int> dims(static_cast<std::size_t>(d), m);
    {
      std::lock_guard lock(planner_mutex());
      // FFTW_ESTIMATE keeps the algorithm choice, and so the rounding, fixed.
      f.forward = fftw_plan_dft_r2c(d, dims.data(), f.real, f.spec, FFTW_ESTIMATE);
      f.backward = fftw_plan_dft_c2r(d, dims.data(), f.spec, f.real, FFTW_ESTIMATE);
    }
    std::fill(f.real, f.real + f.real_n, 0.0);
    const auto wrap = [&](const Site& z) {
      std::size_t i = 0;
      for (int k = 0; k < d; ++k) i = i * m + static_cast<std::size_t>(((z[k] % m) + m) % m);
      return i;
    };
    f.real[0] = a0_;
    for (std::size_t j = 0; j < offsets_.size(); ++j) {
      const Site& z = offsets_[j];
      const Site mz{-z[0], -z[1], -z[2]};
      f.real[wrap(z)] += rates_[j];
      f.real[wrap(mz)] += rates_[j];
    }
    fftw_execute(f.forward);
    f.symbol.resize(f.complex_n);
    const double scale = 1.0 / static_cast<double>(f.real_n);
    for (std::size_t i = 0; i < f.complex_n; ++i) f.symbol[i] = f.spec[i][0] * scale;
  }

  std::vector<double> ones(lattice.size(), 1.0);
  exit_.resize(lattice.size());
  apply(ones, exit_);
  for (auto& r : exit_) r = std::max(0.0, -r);
}

BoxOperator::~BoxOperator() = default;

void BoxOperator::apply(std::span<const double> p, std::span<double> y) const {
  if (p.size() != lattice_.size() || y.size() != lattice_.size())
    throw InvalidArgument("box operator: vector size does not match the box");
  if (method_ == Method::fft)
    apply_fft(p, y);
  else
    apply_direct(p, y);
}

void BoxOperator::apply_fft(std::span<const double> p, std::span<double> y) const {
  auto& f = *fft_;
  const int d = lattice_.d();
  const int side = lattice_.side();
  std::fill(f.real, f.real + f.real_n, 0.0);
  // Box rows are contiguous in both layouts; copy row by row.
  const std::size_t rows = lattice_.size() / static_cast<std::size_t>(side);
  const auto padded_row = [&](std::size_t r) {
    std::size_t base = 0;
    std::size_t stride = 1;
    for (int k = d - 2; k >= 0; --k) {
      base += (r % side) * stride * f.m;
      r /= side;
      stride *= f.m;
    }
    return base;
  };
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(p.data() + r * side, side, f.real + padded_row(r));
  fftw_execute(f.forward);
  simd::kernels().scale_complex(reinterpret_cast<double*>(f.spec), f.symbol.data(), f.complex_n);
  fftw_execute(f.backward);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(f.real + padded_row(r), side, y.data() + r * side);
}

void BoxOperator::apply_direct(std::span<const double> p, std::span<double> y) const {
  const auto& k = simd::kernels();
  const int d = lattice_.d();
  const int R = lattice_.radius();
  const int side = lattice_.side();
  const std::size_t n = lattice_.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = a0_ * p[i];

  const int outer_dims = d - 1;
  const std::size_t rows = n / static_cast<std::size_t>(side);
  for (std::size_t j = 0; j < offsets_.size(); ++j) {
    const Site& z = offsets_[j];
    const double a = rates_[j];
    const int zl = z[d - 1];
    // innermost ranges of target x with x + z (plus) or x - z (minus) inside
    const int plus_lo = std::max(-R, -R - zl), plus_hi = std::min(R, R - zl);
    const int minus_lo = std::max(-R, -R + zl), minus_hi = std::min(R, R + zl);
    const int both_lo = std::max(plus_lo, minus_lo), both_hi = std::min(plus_hi, minus_hi);

    for (std::size_t r = 0; r < rows; ++r) {
      // outer coordinates of this row
      std::array<int, 2> xo{};
      std::size_t rr = r;
      for (int kd = outer_dims - 1; kd >= 0; --kd) {
        xo[kd] = static_cast<int>(rr % side) - R;
        rr /= side;
      }
      bool plus_ok = true, minus_ok = true;
      std::ptrdiff_t plus_shift = 0, minus_shift = 0;  // row offsets in index space
      std::ptrdiff_t stride = side;
      for (int kd = outer_dims - 1; kd >= 0; --kd) {
        plus_ok = plus_ok && std::abs(xo[kd] + z[kd]) <= R;
        minus_ok = minus_ok && std::abs(xo[kd] - z[kd]) <= R;
        plus_shift += static_cast<std::ptrdiff_t>(z[kd]) * stride;
        minus_shift -= static_cast<std::ptrdiff_t>(z[kd]) * stride;
        stride *= side;
      }
      plus_shift += zl;
      minus_shift -= zl;
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(r) * side + R;  // index of x_last = 0
      const auto run = [&](int lo, int hi, std::ptrdiff_t shift) {
        if (lo > hi) return;
        k.axpy(y.data() + base + lo, p.data() + base + lo + shift, a, static_cast<std::size_t>(hi - lo + 1));
      };
      if (plus_ok && minus_ok && both_lo <= both_hi) {
        k.pair_axpy(y.data() + base + both_lo, p.data() + base + both_lo + plus_shift,
                    p.data() + base + both_lo + minus_shift, a, static_cast<std::size_t>(both_hi - both_lo + 1));
        run(plus_lo, std::min(plus_hi, both_lo - 1), plus_shift);
        run(std::max(plus_lo, both_hi + 1), plus_hi, plus_shift);
        run(minus_lo, std::min(minus_hi, both_lo - 1), minus_shift);
        run(std::max(minus_lo, both_hi + 1), minus_hi, minus_shift);
      } else {
        if (plus_ok) run(plus_lo, plus_hi, plus_shift);
        if (minus_ok) run(minus_lo, minus_hi, minus_shift);
      }
    }
  }
}

}  // namespace hbrw
