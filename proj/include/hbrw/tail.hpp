#pragma once

#include <vector>

namespace hbrw {

// Continuum model of the untabulated jumps |z| > R of a power-law kernel.
//
// The lattice sum over the tail is replaced by an integral over |u| > r_eff,
// where r_eff is the radius of the ball whose volume equals the number of
// tabulated sites (for d = 1 this is the midpoint rule, r_eff = R + 1/2).
// With psi_d the spherical average of cos<theta, u> (cos, J0, sinc for
// d = 1, 2, 3) the tail part of -phi becomes
//
//   S_d h |theta|^alpha G(|theta| r_eff),   G(x) = int_x^inf v^(-1-alpha) (1 - psi_d(v)) dv
//
// where h is the spherical mean of H. G is tabulated once per kernel.
class ContinuumTail {
 public:
  ContinuumTail() = default;
  ContinuumTail(int d, double alpha, double h_mean, double r_eff);

  // sum_{|z|>R} a(z)
  double mass() const;
  // sum_{|z|>R} a(z) (1 - cos<theta, z>)
  double versine(double theta_norm) const;
  // c in phi(theta) ~ -c |theta|^alpha
  double small_theta_constant() const;
  double profile(double x) const;

  double r_eff() const { return r_eff_; }
  double h_mean() const { return h_; }

  static double sphere_area(int d);
  // 1 - psi_d(v), accurate for small v.
  static double one_minus_psi(int d, double v);

 private:
  double integrand(double v) const;
  double far_profile(double x) const;

  int d_ = 1;
  double alpha_ = 1.0;
  double h_ = 1.0;
  double r_eff_ = 1.0;
  std::vector<double> nodes_;
  std::vector<double> cum_;  // cum_[i] = int_{nodes_[i]}^{X} integrand
  double g_far_ = 0.0;       // G(X)
};

}  // namespace hbrw
