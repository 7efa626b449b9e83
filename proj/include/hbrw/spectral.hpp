#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbrw/kernel.hpp"
#include "hbrw/quadrature.hpp"

namespace hbrw {

struct SpectralOptions {
  // Absolute quadrature target; 0 selects 1e-8 for d = 1 and 1e-6 otherwise.
  double abs_tol = 0.0;
  // Relative slack added to the target for large values (small lambda).
  double rel_tol = 1e-9;
  std::size_t max_nodes = 6'000'000;
  // Relative width of the band |beta - beta_c| <= tol * max(beta_c, 1).
  double critical_tol = 1e-9;
};

struct GreenEvaluation {
  double lambda = 0.0;
  Site x{};
  Site y{};
  double value = 0.0;
  double quad_error = 0.0;
};

// Fixed quadrature rule for (2 pi)^-d int cos<theta, x> / (lambda - phi(theta))^k.
//
// The rule is built adaptively once for a kernel, a largest lattice offset
// (measured in the l1 norm) and a smallest lambda, then reused: phi is
// evaluated only at construction. Near theta = 0 the symbol is replaced by
// its small-theta model and integrated per call, down to an analytic
// remainder. In d >= 2 the cube is split into pyramids over its faces,
// theta = s * pi * (e_k + u), with geometric panels in s.
class GreenSolver {
 public:
  GreenSolver(TransitionKernel kernel, double x_scale, double lambda_min,
              SpectralOptions options = {});

  const TransitionKernel& kernel() const { return kernel_; }
  double lambda_min() const { return lambda_min_; }
  double x_scale() const { return x_scale_; }
  std::size_t node_count() const { return node_count_; }
  double target() const { return target_; }

  // G_lambda(x, 0)
  quad::Estimate green(double lambda, const Site& x) const;
  // G_lambda(x, 0) for many x at one lambda.
  std::vector<quad::Estimate> green(double lambda, std::span<const Site> xs) const;
  // (2 pi)^-d int (lambda - phi)^-2 = ||G_lambda(., 0)||^2 by Parseval.
  quad::Estimate green_l2_squared(double lambda) const;

 private:
  struct Ray {
    Frequency dir;  // theta = s * dir
    double weight;
    double a;       // -phi ~ a s^alpha + b s^2 below s_inner
    double b;
  };

  quad::Estimate integrate(double lambda, int power, const Site* x) const;
  void check_lambda(double lambda, int power) const;

  TransitionKernel kernel_;
  double x_scale_;
  double lambda_min_;
  SpectralOptions options_;
  double target_ = 0.0;
  double s_inner_ = 0.0;
  int radial_power_ = 0;  // s^(d-1) Jacobian

  std::size_t node_count_ = 0;
  std::vector<double> coords_;  // SoA theta, d * node_count_
  std::vector<double> wk_;      // Kronrod tensor weights (incl. Jacobian)
  std::vector<double> ws_;      // Gauss in s, Kronrod in u
  std::vector<double> wu_;      // Kronrod in s, Gauss in u (d >= 2)
  std::vector<double> phi_;
  std::vector<std::uint32_t> panel_start_;
  std::vector<Ray> rays_;
};

GreenEvaluation green(const TransitionKernel& kernel, double lambda, const Site& x, const Site& y,
                      const SpectralOptions& options = {});

// I_0(lambda) on a strictly decreasing positive grid.
std::vector<double> i0_profile(const TransitionKernel& kernel, std::span<const double> lambdas,
                               const SpectralOptions& options = {});

// 0 when d/alpha <= 1, else 1 / G_0(0, 0).
double beta_c(const TransitionKernel& kernel, const SpectralOptions& options = {});

// Whether int |phi|^-2 converges at the origin (decided numerically from
// dyadic shells), i.e. whether lambda = 0 may be an eigenvalue.
bool l2_admissible(const TransitionKernel& kernel);

enum class RootMethod { illinois, bisection };

struct EigenOptions {
  SpectralOptions spectral{};
  RootMethod method = RootMethod::illinois;
  double residual_tol = 1e-10;
  // Optional starting bracket; otherwise a logarithmic sweep of [1e-12, 1e12].
  std::optional<std::pair<double, double>> bracket;
};

// Root lambda_0 of beta * I_0(lambda) = 1 for beta > beta_c; 0 at beta = beta_c
// when d/alpha > 2; otherwise none.
std::optional<double> solve_eigenvalue(const TransitionKernel& kernel, double beta,
                                       const EigenOptions& options = {});

// f(x) = beta I_x(lambda_0) normalized to f(0) = 1 on |x|_inf <= box_radius.
std::map<Site, double> eigenfunction(const TransitionKernel& kernel, double beta, double lambda0,
                                     int box_radius, const SpectralOptions& options = {});

enum class Band { half_to_one, one_to_two, above_two };
enum class Regime { subcritical, critical, supercritical };

std::string band_name(Band band);
std::string regime_name(Regime regime);
Band band_of(double ratio);

class RegimeReport {
 public:
  double ratio = 0.0;
  Band band = Band::half_to_one;
  double beta = 0.0;
  double beta_c = 0.0;
  double g0 = 0.0;  // G_0(0,0); 0 when infinite
  Regime classification = Regime::subcritical;
  std::optional<double> eigenvalue;
  double residual = 0.0;  // |beta I_0(lambda_0) - 1|
  double quad_error = 0.0;

  // c(lambda_0, x, y) = G(x,0) G(0,y) / ||G(., 0)||^2 (supercritical only).
  bool has_c_const() const { return solver_ != nullptr && eigenvalue.has_value(); }
  double c_const(const Site& x, const Site& y) const;
  double c_const_error() const;

 private:
  friend RegimeReport classify(const TransitionKernel&, const BranchingLaw&, double,
                               const SpectralOptions&, double);
  std::shared_ptr<const GreenSolver> solver_;
  double l2_ = 0.0;
  double l2_error_ = 0.0;
};

// `reach` bounds |x|_1 + |y|_1 for later c_const queries.
RegimeReport classify(const TransitionKernel& kernel, const BranchingLaw& law, double tol = 1e-9,
                      const SpectralOptions& options = {}, double reach = 16.0);

}  // namespace hbrw
