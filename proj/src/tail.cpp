#include "hbrw/tail.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hbrw/error.hpp"
#include "hbrw/quadrature.hpp"

namespace hbrw {

namespace {

constexpr double kInnerEdge = 1e-10;  // below: 1 - psi ~ v^2 / (2d)
constexpr double kFarEdge = 400.0;    // above: asymptotic expansion
constexpr double kUniformWidth = 0.5;

}  // namespace

double ContinuumTail::sphere_area(int d) {
  switch (d) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * std::numbers::pi;
    case 3:
      return 4.0 * std::numbers::pi;
    default:
      throw InvalidArgument("ContinuumTail: dimension must be 1, 2 or 3");
  }
}

double ContinuumTail::one_minus_psi(int d, double v) {
  const double v2 = v * v;
  switch (d) {
    case 1: {
      const double s = std::sin(0.5 * v);
      return 2.0 * s * s;
    }
    case 2: {
      if (v < 0.5) {
        // 1 - J0(v) = sum_{k>=1} (-1)^(k+1) (v^2/4)^k / (k!)^2
        const double q = 0.25 * v2;
        double term = q;
        double sum = q;
        for (int k = 2; k < 12; ++k) {
          term *= -q / (static_cast<double>(k) * k);
          sum += term;
        }
        return sum;
      }
      return 1.0 - std::cyl_bessel_j(0.0, v);
    }
    case 3: {
      if (v < 0.5) {
        // 1 - sin(v)/v = v^2/3! - v^4/5! + ...
        double term = v2 / 6.0;
        double sum = term;
        for (int k = 2; k < 10; ++k) {
          term *= -v2 / ((2.0 * k) * (2.0 * k + 1.0));
          sum += term;
        }
        return sum;
      }
      return 1.0 - std::sin(v) / v;
    }
    default:
      throw InvalidArgument("ContinuumTail: dimension must be 1, 2 or 3");
  }
}

double ContinuumTail::integrand(double v) const {
  return std::pow(v, -1.0 - alpha_) * one_minus_psi(d_, v);
}

// G(x) = x^-alpha / alpha - int_x^inf v^(-1-alpha) psi(v) dv for large x,
// the oscillatory part from repeated integration by parts.
double ContinuumTail::far_profile(double x) const {
  const double s = 1.0 + alpha_;
  double oscillatory = 0.0;
  switch (d_) {
    case 1:
      oscillatory = -std::sin(x) * std::pow(x, -s) + s * std::cos(x) * std::pow(x, -s - 1.0) +
                    s * (s + 1.0) * std::sin(x) * std::pow(x, -s - 2.0);
      break;
    case 2: {
      const double chi = x - 0.25 * std::numbers::pi;
      const double m = s + 0.5;
      oscillatory = std::sqrt(2.0 / std::numbers::pi) *
                    (-std::sin(chi) * std::pow(x, -m) + (m + 0.125) * std::cos(chi) * std::pow(x, -m - 1.0));
      break;
    }
    case 3:
      oscillatory = std::cos(x) * std::pow(x, -s - 1.0) +
                    (s + 1.0) * std::sin(x) * std::pow(x, -s - 2.0) -
                    (s + 1.0) * (s + 2.0) * std::cos(x) * std::pow(x, -s - 3.0);
      break;
    default:
      break;
  }
  return std::pow(x, -alpha_) / alpha_ - oscillatory;
}

ContinuumTail::ContinuumTail(int d, double alpha, double h_mean, double r_eff)
    : d_(d), alpha_(alpha), h_(h_mean), r_eff_(r_eff) {
  sphere_area(d);  // validates d
  if (!(alpha > 0.0 && alpha < 2.0)) throw InvalidArgument("ContinuumTail: alpha must lie in (0, 2)");

  for (double v = kInnerEdge; v < 1.0; v *= 2.0) nodes_.push_back(v);
  for (double v = 1.0; v < kFarEdge; v += kUniformWidth) nodes_.push_back(v);
  nodes_.push_back(kFarEdge);

  cum_.assign(nodes_.size(), 0.0);
  for (std::size_t i = nodes_.size() - 1; i-- > 0;) {
    const auto piece = quad::gk15([this](double v) { return integrand(v); }, nodes_[i], nodes_[i + 1]);
    cum_[i] = cum_[i + 1] + piece.value;
  }
  g_far_ = far_profile(kFarEdge);
}

double ContinuumTail::profile(double x) const {
  x = std::abs(x);
  if (x >= kFarEdge) return far_profile(x);
  if (x < kInnerEdge) {
    const double e = 2.0 - alpha_;
    return g_far_ + cum_.front() + (std::pow(kInnerEdge, e) - std::pow(x, e)) / (e * 2.0 * d_);
  }
  const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - nodes_.begin());  // nodes_[i-1] <= x < nodes_[i]
  double partial = 0.0;
  const double a = x;
  const double b = nodes_[i];
  if (b > a) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    for (const auto& n : quad::kGK15) partial += n.wk * integrand(c + h * n.x);
    partial *= h;
  }
  return g_far_ + cum_[i] + partial;
}

double ContinuumTail::mass() const {
  return sphere_area(d_) * h_ * std::pow(r_eff_, -alpha_) / alpha_;
}

double ContinuumTail::versine(double theta_norm) const {
  if (theta_norm == 0.0) return 0.0;
  return sphere_area(d_) * h_ * std::pow(theta_norm, alpha_) * profile(theta_norm * r_eff_);
}

double ContinuumTail::small_theta_constant() const {
  return sphere_area(d_) * h_ * profile(0.0);
}

}  // namespace hbrw
