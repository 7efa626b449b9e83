#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "hbrw/kernel.hpp"

namespace hbrw {

// The box |x|_inf <= radius of Z^d with row-major state indices (last
// coordinate fastest). Mass that jumps out of the box is absorbed.
class TruncatedLattice {
 public:
  TruncatedLattice(int d, int radius);

  int d() const { return d_; }
  int radius() const { return radius_; }
  int side() const { return 2 * radius_ + 1; }
  std::size_t size() const { return size_; }

  bool contains(const Site& x) const;
  std::size_t index(const Site& x) const;
  Site site(std::size_t index) const;
  std::size_t origin() const { return index(Site{}); }

 private:
  int d_;
  int radius_;
  std::size_t size_;
};

// y = A_box p, the generator restricted to the box. Jumps are the tabulated
// entries a(z), |z| <= min(R, box diameter). Two interchangeable backends: a
// direct sum over offsets (SIMD axpy) and a zero-padded FFT convolution.
class BoxOperator {
 public:
  enum class Method { automatic, direct, fft };

  BoxOperator(const TransitionKernel& kernel, const TruncatedLattice& lattice,
              Method method = Method::automatic);
  ~BoxOperator();
  BoxOperator(const BoxOperator&) = delete;
  BoxOperator& operator=(const BoxOperator&) = delete;

  const TruncatedLattice& lattice() const { return lattice_; }
  Method method() const { return method_; }
  double a0() const { return a0_; }

  // Not reentrant: the FFT backend uses internal work buffers.
  void apply(std::span<const double> p, std::span<double> y) const;

  // Rate at which mass at x leaves the box, -(row sum) >= 0.
  std::span<const double> exit_rates() const { return exit_; }

 private:
  void apply_direct(std::span<const double> p, std::span<double> y) const;
  void apply_fft(std::span<const double> p, std::span<double> y) const;

  TruncatedLattice lattice_;
  Method method_;
  double a0_;
  std::vector<Site> offsets_;  // half set of jumps kept in the box
  std::vector<double> rates_;
  std::vector<double> exit_;

  struct Fft;
  std::unique_ptr<Fft> fft_;
};

}  // namespace hbrw
