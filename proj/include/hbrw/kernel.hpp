#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hbrw/simd.hpp"
#include "hbrw/tail.hpp"

namespace hbrw {

inline constexpr int kMaxDim = 3;

// Lattice point in Z^d, d <= 3; unused trailing coordinates are zero.
using Site = std::array<int, kMaxDim>;
// Point of the torus [-pi, pi]^d.
using Frequency = std::array<double, kMaxDim>;

double norm(const Site& z, int d);
double norm(const Frequency& theta, int d);

// H(u) on the unit sphere. Built-in forms serialize to a descriptor string:
//   "const c"      H = c
//   "cubic a b"    H = a + b * sum_k u_k^4
// Arbitrary callables are accepted for experiments but cannot be serialized.
class AngularWeight {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  static AngularWeight constant(double c = 1.0);
  static AngularWeight cubic(double a, double b);
  static AngularWeight custom(Fn fn, std::string descriptor = "custom");
  static AngularWeight parse(const std::string& descriptor);

  double operator()(std::span<const double> unit) const { return fn_(unit); }
  const std::string& descriptor() const { return descriptor_; }
  bool is_constant() const { return constant_; }

 private:
  AngularWeight(Fn fn, std::string descriptor, bool constant)
      : fn_(std::move(fn)), descriptor_(std::move(descriptor)), constant_(constant) {}

  Fn fn_;
  std::string descriptor_;
  bool constant_ = false;
};

// Heavy-tailed intensity matrix a(z) = H(z/|z|) / |z|^(d+alpha), z != 0.
// Entries with |z| <= table_radius are tabulated; the mass beyond is folded
// into a0 analytically (see ContinuumTail). Immutable; copies share storage.
class TransitionKernel {
 public:
  int d() const { return data_->d; }
  double alpha() const { return data_->alpha; }
  double ratio() const { return data_->d / data_->alpha; }
  const AngularWeight& H() const { return data_->H; }
  int table_radius() const { return data_->R; }

  // Diagonal a(0) < 0.
  double a0() const { return data_->a0; }
  // Analytic estimate of sum_{|z|>R} a(z).
  double tail_mass() const { return data_->tail.mass(); }
  // Bound on the intensity discarded by the table (tail mass + estimate error).
  double tail_sum_error() const { return data_->tail_sum_error; }
  // Sum of tabulated off-diagonal entries.
  double tabulated_sum() const { return data_->tabulated_sum; }

  // a(z) for any z (exact power law off the origin).
  double a(const Site& z) const;

  // Half of the tabulated support: z with first nonzero coordinate positive.
  std::size_t half_size() const { return data_->half.size(); }
  const std::vector<Site>& half_sites() const { return data_->half; }
  // a(z) for half_sites()[j]
  double half_rate(std::size_t j) const { return 0.5 * data_->weights[j]; }

  // phi(theta) = sum_z a(z) cos<theta, z>, including the continuum tail.
  double symbol(const Frequency& theta) const;
  double symbol(const Frequency& theta, const simd::KernelTable& k) const;

  // phi ~ -c |theta|^alpha for |theta| << 1/R.
  double small_theta_constant() const { return data_->tail.small_theta_constant(); }
  const ContinuumTail& tail() const { return data_->tail; }

  // Least-squares slope of log a(z) vs log|z| over tabulated R/4 <= |z| <= R.
  double tail_slope() const;

  // Short identifier for provenance records.
  std::string id() const;

 private:
  friend TransitionKernel build_kernel(int, double, const AngularWeight&, int);

  struct Data {
    int d = 1;
    double alpha = 1.0;
    AngularWeight H = AngularWeight::constant();
    int R = 2;
    double a0 = 0.0;
    double tabulated_sum = 0.0;
    double tail_sum_error = 0.0;
    std::vector<Site> half;
    std::vector<double> coords;   // SoA, d * half.size()
    std::vector<double> weights;  // 2 a(z)
    ContinuumTail tail;
  };

  explicit TransitionKernel(std::shared_ptr<const Data> data) : data_(std::move(data)) {}

  std::shared_ptr<const Data> data_;
};

TransitionKernel build_kernel(int d, double alpha, const AngularWeight& H, int R);

struct SmallThetaBounds {
  double c_low;
  double c_high;
};

// Empirical min/max of |phi(theta)| / |theta|^alpha over a grid shrinking to 0.
SmallThetaBounds symbol_small_theta_bounds(const TransitionKernel& kernel,
                                           std::span<const Frequency> theta_grid);

// Continuous-time Galton-Watson law at the source:
// f(u) = sum_n b_n u^n, b_1 = -sum_{n != 1} b_n.
class BranchingLaw {
 public:
  const std::map<int, double>& b() const { return b_; }
  double b1() const { return b1_; }
  double beta() const { return beta_; }
  int r_max() const { return static_cast<int>(factorial_.size()); }
  // beta^(r) = f^(r)(1), r = 1..r_max
  double factorial_moment(int r) const;
  // Total rate -b_1 of branching events at the source.
  double event_rate() const { return -b1_; }
  std::string id() const;

 private:
  friend BranchingLaw build_branching(const std::map<int, double>&, int);
  std::map<int, double> b_;
  double b1_ = 0.0;
  double beta_ = 0.0;
  std::vector<double> factorial_;
};

BranchingLaw build_branching(const std::map<int, double>& b, int r_max);

// g_n(m_1..m_{n-1}) = sum_{r=2}^{n} beta^(r)/r! sum over ordered compositions
// i_1+..+i_r = n of n!/(i_1!..i_r!) m_{i_1}..m_{i_r}. n <= 12.
double g_n(const BranchingLaw& law, int n, std::span<const double> lower_moments);

inline constexpr int kMaxMomentOrder = 12;

}  // namespace hbrw
