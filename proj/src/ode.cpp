#include "hbrw/ode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hbrw/error.hpp"

namespace hbrw {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense output
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace

OdeStats DormandPrince::integrate(const Rhs& rhs, std::span<const double> y0, double t0,
                                  std::span<const double> out_times, const Observer& observe) const {
  const std::size_t n = y0.size();
  OdeStats stats;
  if (out_times.empty()) return stats;
  for (std::size_t i = 0; i < out_times.size(); ++i) {
    if (out_times[i] < t0 || (i > 0 && out_times[i] < out_times[i - 1]))
      throw InvalidArgument("ode: output times must be ascending and >= t0");
  }

  std::vector<double> y(y0.begin(), y0.end()), ynew(n), ytmp(n), yout(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n);
  const double t_end = out_times.back();

  auto f = [&](double t, const std::vector<double>& in, std::vector<double>& out) {
    rhs(t, in, out);
    ++stats.evaluations;
  };

  std::size_t next_out = 0;
  while (next_out < out_times.size() && out_times[next_out] == t0) observe(next_out++, y);
  if (next_out == out_times.size()) return stats;

  double t = t0;
  f(t, y, k1);

  const auto err_norm = [&](const std::vector<double>& a, const std::vector<double>& b,
                            const std::vector<double>& e) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = options_.atol + options_.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
      const double q = e[i] / sc;
      s += q * q;
    }
    return std::sqrt(s / static_cast<double>(std::max<std::size_t>(n, 1)));
  };

  double h = options_.initial_step;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic
    const double d0 = err_norm(y, y, y);
    const double dd1 = err_norm(y, y, k1);
    double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
    h0 = std::min(h0, t_end - t0);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
    f(t + h0, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ynew[i] = k2[i] - k1[i];
    const double dd2 = err_norm(y, y, ynew) / h0;
    const double h1 = std::max(dd1, dd2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                    : std::pow(0.01 / std::max(dd1, dd2), 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }
  const double scale = std::max(std::abs(t0), std::abs(t_end));
  const double h_min = options_.min_step * std::max(scale, 1.0);
  double facold = 1e-4;

  while (next_out < out_times.size()) {
    if (stats.steps + stats.rejected >= options_.max_steps) throw StepSizeUnderflow("ode: step budget exhausted");
    if (h < h_min) {
      std::ostringstream os;
      os << "ode: step size " << h << " underflow at t = " << t;
      throw StepSizeUnderflow(os.str());
    }
    if (t + h > t_end) h = t_end - t;

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    f(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    f(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    f(t + h, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    f(t + h, ynew, k7);

    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const double err = err_norm(y, ynew, ytmp);

    // PI step-size control (Hairer & Wanner)
    const double expo1 = 0.2 - 0.04;
    const double fac11 = std::pow(std::max(err, 1e-300), expo1);
    double fac = fac11 / std::pow(facold, 0.04) / 0.9;
    fac = std::clamp(fac, 1.0 / 10.0, 1.0 / 0.2);
    double hnew = h / fac;

    if (!(err <= 1.0)) {
      hnew = h / std::min(1.0 / 0.2, fac11 / 0.9);
      ++stats.rejected;
      h = hnew;
      continue;
    }
    facold = std::max(err, 1e-4);
    ++stats.steps;

    // dense output coefficients for this step
    for (std::size_t i = 0; i < n; ++i) {
      const double ydiff = ynew[i] - y[i];
      const double bspl = h * k1[i] - ydiff;
      r1[i] = y[i];
      r2[i] = ydiff;
      r3[i] = bspl;
      r4[i] = ydiff - h * k7[i] - bspl;
      r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
    }
    const double t_new = (t_end - (t + h) <= 1e-14 * std::max(1.0, scale)) ? t_end : t + h;
    while (next_out < out_times.size() && out_times[next_out] <= t_new) {
      const double theta = (out_times[next_out] - t) / h;
      const double theta1 = 1.0 - theta;
      if (out_times[next_out] == t_new) {
        observe(next_out++, ynew);
        continue;
      }
      for (std::size_t i = 0; i < n; ++i)
        yout[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
      observe(next_out++, yout);
    }

    t = t_new;
    std::swap(y, ynew);
    std::swap(k1, k7);  // FSAL
    h = hnew;
  }
  return stats;
}

}  // namespace hbrw
