#include "hbrw/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hbrw/error.hpp"
#include "hbrw/lattice.hpp"
#include "hbrw/ode.hpp"
#include "hbrw/simulate.hpp"

namespace hbrw {

namespace {

constexpr double kEdgeTol = 1e-9;

bool near(double a, double b) { return std::abs(a - b) <= kEdgeTol * std::max(1.0, std::abs(b)); }

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

std::string site_string(const Site& s) {
  std::ostringstream o;
  o << '(' << s[0] << ',' << s[1] << ',' << s[2] << ')';
  return o.str();
}

}  // namespace

std::string asymptotic_band_name(AsymptoticBand band) {
  switch (band) {
    case AsymptoticBand::half_to_one: return "(1/2,1)";
    case AsymptoticBand::one: return "1";
    case AsymptoticBand::one_to_three_halves: return "(1,3/2)";
    case AsymptoticBand::three_halves: return "3/2";
    case AsymptoticBand::three_halves_to_two: return "(3/2,2)";
    case AsymptoticBand::two: return "2";
    case AsymptoticBand::above_two: return "(2,inf)";
  }
  return "?";
}

AsymptoticBand asymptotic_band(double r, double tol) {
  if (!(r > 0.5) || !std::isfinite(r)) throw InvalidArgument("band: d/alpha must be a finite value above 1/2");
  auto at = [&](double edge) { return std::abs(r - edge) <= tol * edge; };
  if (at(1.0)) return AsymptoticBand::one;
  if (at(1.5)) return AsymptoticBand::three_halves;
  if (at(2.0)) return AsymptoticBand::two;
  if (r < 1.0) return AsymptoticBand::half_to_one;
  if (r < 1.5) return AsymptoticBand::one_to_three_halves;
  if (r < 2.0) return AsymptoticBand::three_halves_to_two;
  return AsymptoticBand::above_two;
}

const std::vector<AsymptoticBand>& all_asymptotic_bands() {
  static const std::vector<AsymptoticBand> all{
      AsymptoticBand::half_to_one,         AsymptoticBand::one, AsymptoticBand::one_to_three_halves,
      AsymptoticBand::three_halves,        AsymptoticBand::three_halves_to_two,
      AsymptoticBand::two,                 AsymptoticBand::above_two};
  return all;
}

double band_representative(AsymptoticBand band) {
  switch (band) {
    case AsymptoticBand::half_to_one: return 0.75;
    case AsymptoticBand::one: return 1.0;
    case AsymptoticBand::one_to_three_halves: return 1.25;
    case AsymptoticBand::three_halves: return 1.5;
    case AsymptoticBand::three_halves_to_two: return 1.75;
    case AsymptoticBand::two: return 2.0;
    case AsymptoticBand::above_two: return 2.5;
  }
  return 0.0;
}

std::string form_name(Form form) {
  switch (form) {
    case Form::power_log: return "power_log";
    case Form::exponential: return "exponential";
    case Form::constant_limit: return "constant_limit";
  }
  return "?";
}

Form parse_form(const std::string& name) {
  if (name == "power_log") return Form::power_log;
  if (name == "exponential") return Form::exponential;
  if (name == "constant_limit") return Form::constant_limit;
  throw InvalidArgument("unknown fit form '" + name + "'");
}

std::string constant_kind_name(ConstantKind kind) {
  switch (kind) {
    case ConstantKind::known_formula: return "known_formula";
    case ConstantKind::estimable: return "estimable";
    case ConstantKind::unknown: return "unknown";
  }
  return "?";
}

std::string constant_formula_name(ConstantFormula f) {
  switch (f) {
    case ConstantFormula::none: return "none";
    case ConstantFormula::unit: return "unit";
    case ConstantFormula::transition_scale: return "h";
    case ConstantFormula::critical_local: return "critical_C1_local";
    case ConstantFormula::critical_total: return "critical_C1_total";
    case ConstantFormula::subcritical_total: return "C1_total";
    case ConstantFormula::subcritical_local: return "C1_local";
    case ConstantFormula::subcritical_total_higher: return "Cn_total";
    case ConstantFormula::subcritical_local_higher: return "Cn_local";
    case ConstantFormula::supercritical_local: return "c_lambda0";
    case ConstantFormula::supercritical_total: return "c_lambda0_total";
  }
  return "?";
}

std::string AsymptoticPrediction::describe() const {
  std::ostringstream o;
  o << regime_name(regime) << ' ' << quantity_name(quantity) << " n=" << n << " d/alpha in "
    << asymptotic_band_name(band) << ": ";
  switch (form) {
    case Form::exponential:
      o << "C exp(" << rate_multiple << " lambda0 t)";
      break;
    case Form::constant_limit:
      o << "-> C";
      break;
    case Form::power_log:
      o << "C t^" << p;
      if (q != 0.0) o << " (ln t)^" << q;
      break;
  }
  o << " [" << constant_kind_name(constant) << ']';
  return o.str();
}

AsymptoticPrediction predict(int d, double alpha, Regime regime, int n, Quantity quantity,
                             std::optional<double> lambda0) {
  if (d < 1 || d > 3) throw InvalidArgument("predict: d must be 1, 2 or 3");
  if (!(alpha > 0.0 && alpha < 2.0)) throw InvalidArgument("predict: alpha must lie in (0, 2)");
  if (n < 1) throw InvalidArgument("predict: n must be >= 1");
  const double r = d / alpha;
  if (!(r > 0.5)) throw InvalidArgument("predict: d/alpha must exceed 1/2");
  if (lambda0 && !(*lambda0 > 0.0)) throw InvalidArgument("predict: lambda_0 must be positive");

  AsymptoticPrediction pr;
  pr.regime = regime;
  pr.band = asymptotic_band(r);
  pr.n = n;
  pr.quantity = quantity;
  const bool local = quantity == Quantity::local;
  const bool first = n == 1;
  const std::string order = first ? "first" : "higher";
  pr.tag = regime_name(regime) + "/" + quantity_name(quantity) + "/" + asymptotic_band_name(pr.band) + "/" + order;
  const double nn = n;

  if (regime == Regime::supercritical) {
    pr.form = Form::exponential;
    pr.rate_multiple = nn;
    pr.rate = lambda0 ? nn * *lambda0 : std::numeric_limits<double>::quiet_NaN();
    if (first) {
      pr.constant = local ? ConstantKind::known_formula : ConstantKind::estimable;
      pr.formula = local ? ConstantFormula::supercritical_local : ConstantFormula::supercritical_total;
    }
    return pr;
  }

  using B = AsymptoticBand;
  if (regime == Regime::critical) {
    if (local) {
      switch (pr.band) {
        case B::half_to_one: pr.p = -1.0 / alpha; break;
        case B::one: pr.p = -1.0; break;
        case B::one_to_three_halves: pr.p = r - 2.0; break;
        case B::three_halves: pr.p = -0.5; pr.q = nn - 1.0; break;
        case B::three_halves_to_two: pr.p = (r - 2.0) * (2.0 * nn - 1.0) + nn - 1.0; break;
        case B::two: pr.p = nn - 1.0; pr.q = 1.0 - 2.0 * nn; break;
        case B::above_two: pr.p = nn - 1.0; break;
      }
      if (first) {
        pr.constant = ConstantKind::estimable;
        pr.formula = r <= 1.0 + kEdgeTol ? ConstantFormula::transition_scale : ConstantFormula::critical_local;
      }
    } else {
      switch (pr.band) {
        case B::half_to_one: pr.p = (1.0 - 1.0 / alpha) * (nn - 1.0); break;
        case B::one: pr.q = nn - 1.0; break;
        case B::one_to_three_halves:
        case B::three_halves_to_two: pr.p = (r - 1.0) * (2.0 * nn - 1.0); break;
        case B::three_halves: pr.p = nn - 0.5; break;
        case B::two: pr.p = 2.0 * nn - 1.0; pr.q = 1.0 - 2.0 * nn; break;
        case B::above_two: pr.p = 2.0 * nn - 1.0; break;
      }
      if (first) {
        if (r <= 1.0 + kEdgeTol) {
          pr.constant = ConstantKind::known_formula;
          pr.formula = ConstantFormula::unit;
        } else {
          pr.constant = ConstantKind::estimable;
          pr.formula = ConstantFormula::critical_total;
        }
      }
    }
  } else {
    // Subcritical: every order shares the first-moment form.
    const bool recurrent = r <= 1.0 + kEdgeTol;
    if (local) {
      if (pr.band == B::half_to_one) pr.p = 1.0 / alpha - 2.0;
      else if (pr.band == B::one) { pr.p = -1.0; pr.q = -2.0; }
      else pr.p = -r;
      pr.constant = ConstantKind::estimable;
      pr.formula = first ? ConstantFormula::subcritical_local : ConstantFormula::subcritical_local_higher;
    } else {
      if (pr.band == B::half_to_one) pr.p = 1.0 / alpha - 1.0;
      else if (pr.band == B::one) pr.q = -1.0;
      pr.constant = recurrent ? ConstantKind::estimable : ConstantKind::known_formula;
      pr.formula = first ? ConstantFormula::subcritical_total : ConstantFormula::subcritical_total_higher;
    }
  }
  if (pr.p == 0.0 && pr.q == 0.0) pr.form = Form::constant_limit;
  return pr;
}

// ---------------------------------------------------------------------------

ConstantEvaluators::ConstantEvaluators(TransitionKernel kernel, BranchingLaw law, ConstantOptions options)
    : kernel_(std::move(kernel)), law_(std::move(law)), options_(options) {
  report_ = classify(kernel_, law_, options_.spectral.critical_tol, options_.spectral, options_.reach);
}

ConstantEvaluators::~ConstantEvaluators() = default;
ConstantEvaluators::ConstantEvaluators(ConstantEvaluators&&) noexcept = default;
ConstantEvaluators& ConstantEvaluators::operator=(ConstantEvaluators&&) noexcept = default;

const GreenSolver& ConstantEvaluators::solver() const {
  if (!solver_) {
    double lmin = 0.0;
    if (report_.eigenvalue && *report_.eigenvalue > 0.0) lmin = *report_.eigenvalue;
    else if (kernel_.ratio() <= 1.0) throw DivergentIntegral("G_0 diverges for d/alpha <= 1");
    solver_ = std::make_shared<GreenSolver>(kernel_, options_.reach, lmin, options_.spectral);
  }
  return *solver_;
}

double ConstantEvaluators::G0(const Site& x) const {
  if (kernel_.ratio() <= 1.0) throw DivergentIntegral("G_0 diverges for d/alpha <= 1");
  if (auto it = g0_cache_.find(x); it != g0_cache_.end()) return it->second;
  if (!solver_ || solver_->lambda_min() > 0.0) {
    // the supercritical solver starts at lambda_0; G_0 needs its own rule
    auto s = std::make_shared<GreenSolver>(kernel_, options_.reach, 0.0, options_.spectral);
    const double v = s->green(0.0, x).value;
    if (!solver_) solver_ = s;
    return g0_cache_[x] = v;
  }
  return g0_cache_[x] = solver_->green(0.0, x).value;
}

ConstantValue ConstantEvaluators::h() const {
  const int d = kernel_.d();
  const double a = kernel_.alpha();
  const double c = kernel_.small_theta_constant();
  // (2 pi)^-d int exp(-c |theta|^alpha) d theta
  const double v = ContinuumTail::sphere_area(d) * std::tgamma(d / a) /
                   (a * std::pow(c, d / a) * std::pow(2.0 * std::numbers::pi, d));
  return {"h", v, 0.0, ConstantKind::estimable};
}

ConstantValue ConstantEvaluators::gamma() const {
  if (gamma_cache_) return *gamma_cache_;
  const double r = kernel_.ratio();
  const double hv = h().value;
  ConstantValue out{"gamma", 0.0, 0.0, ConstantKind::estimable};
  if (near(r, 1.0) || near(r, 2.0)) {
    out.value = hv;
  } else if (r < 1.0) {
    out.value = hv * std::tgamma(1.0 - r);
  } else if (r < 2.0) {
    out.value = -hv * std::tgamma(1.0 - r);
  } else {
    // int_0^inf int_t^inf p(s,0,0) ds dt = int s p(s,0,0) ds = ||G_0(., 0)||^2
    auto s = std::make_shared<GreenSolver>(kernel_, options_.reach, 0.0, options_.spectral);
    const auto e = s->green_l2_squared(0.0);
    out.value = e.value;
    out.error = e.error;
  }
  gamma_cache_ = out;
  return out;
}

ConstantValue ConstantEvaluators::g(const Site& x) const {
  const double beta = law_.beta();
  ConstantValue out{"g" + site_string(x), 1.0, 0.0, ConstantKind::estimable};
  if (x == Site{} || beta == 0.0) return out;

  // int_0^T (p(t,0,0) - p(t,0,x)) dt on the box, then the t^-(d+2)/alpha tail.
  const TruncatedLattice lat(kernel_.d(), options_.box_radius);
  if (!lat.contains(x)) throw InvalidArgument("g: x outside the integration box");
  const BoxOperator op(kernel_, lat);
  const std::size_t n = lat.size();
  const std::size_t i0 = lat.origin();
  const std::size_t ix = lat.index(x);
  std::vector<double> y0(n + 2, 0.0);
  y0[i0] = 1.0;
  const auto grid = uniform_grid(options_.horizon, options_.grid_points);
  std::vector<double> diff(grid.size()), integral(grid.size());
  DormandPrince ode(OdeOptions{.rtol = 1e-9, .atol = 1e-14});
  ode.integrate(
      [&](double, std::span<const double> s, std::span<double> ds) {
        op.apply(s.first(n), ds.first(n));
        ds[n] = s[i0] - s[ix];
        ds[n + 1] = 0.0;
      },
      y0, 0.0, grid,
      [&](std::size_t i, std::span<const double> s) {
        diff[i] = s[i0] - s[ix];
        integral[i] = s[n];
      });
  const double kappa = (kernel_.d() + 2.0) / kernel_.alpha();
  if (!(kappa > 1.0)) throw DivergentIntegral("g: tail exponent does not give an integrable tail");
  const double T = grid.back();
  const double tail = diff.back() * T / (kappa - 1.0);
  // second estimate of the tail from the half-horizon decay, as an error scale
  const std::size_t ih = grid.size() / 2;
  const double tail_half = diff[ih] * std::pow(grid[ih] / T, kappa) * T / (kappa - 1.0);
  if (diff.back() < 0.0) throw DivergentIntegral("g: p(t,0,0) - p(t,x,0) is negative at the horizon");
  const double I = integral.back() + tail;
  out.value = 1.0 - beta * I;
  out.error = std::abs(beta) * (std::abs(tail - tail_half) + std::abs(tail) * 0.1 + 1e-9);
  return out;
}

ConstantValue ConstantEvaluators::C1_total(const Site& x) const {
  const double beta = law_.beta();
  const double r = kernel_.ratio();
  ConstantValue out{"C1" + site_string(x), 1.0, 0.0, ConstantKind::estimable};
  switch (regime()) {
    case Regime::supercritical: return c_supercritical_total(x);
    case Regime::critical:
      if (r <= 1.0 + kEdgeTol) {
        out.kind = ConstantKind::known_formula;
        return out;
      }
      out.value = G0(x) / gamma().value;
      if (r < 2.0 && !near(r, 2.0)) out.value /= std::tgamma(r);
      out.error = std::abs(out.value) * (gamma().error / gamma().value + solver().target());
      return out;
    case Regime::subcritical:
      break;
  }
  if (r > 1.0 + kEdgeTol) {
    const double g00 = G0({});
    out.kind = ConstantKind::known_formula;
    out.value = (1.0 - beta * (g00 - G0(x))) / (1.0 - beta * g00);
    out.error = std::abs(beta) * 4.0 * solver().target() / std::abs(1.0 - beta * g00);
    return out;
  }
  if (!(beta < 0.0)) throw InvalidArgument("C1: subcritical recurrent bands need beta < 0");
  const auto gm = gamma();
  out.value = near(r, 1.0) ? -1.0 / (beta * gm.value) : -1.0 / (beta * gm.value * std::tgamma(1.0 / kernel_.alpha()));
  return out;
}

ConstantValue ConstantEvaluators::C1_local(const Site& x, const Site& y) const {
  const double beta = law_.beta();
  const double r = kernel_.ratio();
  const std::string name = "C1" + site_string(x) + site_string(y);
  ConstantValue out{name, 0.0, 0.0, ConstantKind::estimable};
  switch (regime()) {
    case Regime::supercritical: return c_supercritical(x, y);
    case Regime::critical:
      if (r <= 1.0 + kEdgeTol) {
        out.value = h().value;
        return out;
      }
      out.value = G0(x) * G0(y) / gamma().value;
      if (r < 2.0 && !near(r, 2.0)) out.value /= std::tgamma(r - 1.0);
      out.error = std::abs(out.value) * (gamma().error / gamma().value + 2.0 * solver().target());
      return out;
    case Regime::subcritical:
      break;
  }
  const double hv = h().value;
  if (r > 1.0 + kEdgeTol) {
    const double g00 = G0({});
    const double c00 = hv / ((1.0 - beta * g00) * (1.0 - beta * g00));
    out.value = (C1_total(x).value + beta * G0(y) * C1_total({}).value) * hv + beta * beta * c00 * G0(x) * G0(y);
    out.error = std::abs(out.value) * 8.0 * solver().target();
    return out;
  }
  if (!(beta < 0.0)) throw InvalidArgument("C1: subcritical recurrent bands need beta < 0");
  const double gm = gamma().value;
  const double c00 = near(r, 1.0) ? 1.0 / (beta * beta * gm)
                                  : -1.0 / (beta * beta * gm * std::tgamma(1.0 / kernel_.alpha() - 1.0));
  const auto gx = g(x);
  const auto gy = g(y);
  out.value = c00 * gx.value * gy.value;
  out.error = std::abs(c00) * (std::abs(gx.value) * gy.error + std::abs(gy.value) * gx.error);
  return out;
}

ConstantValue ConstantEvaluators::chi(int n, const Site& x) const {
  if (n < 2) throw InvalidArgument("chi: n must be >= 2");
  double s = 0.0, err = 0.0;
  for (int i = 1; i < n; ++i) {
    const auto a = Cn_total(i, x);
    const auto b = Cn_total(n - i, x);
    s += binomial(n, i) * a.value * b.value;
    err += binomial(n, i) * (std::abs(a.value) * b.error + std::abs(b.value) * a.error);
  }
  const double half = 0.5 * law_.factorial_moment(2);
  return {"chi" + std::to_string(n) + site_string(x), half * s, std::abs(half) * err, ConstantKind::known_formula};
}

double ConstantEvaluators::occupation(const Site& x) const {
  // int_0^inf m_1(s, x, 0) ds = G_0(x,0) / (1 - beta G_0(0,0))
  return G0(x) / (1.0 - law_.beta() * G0({}));
}

ConstantValue ConstantEvaluators::Cn_total(int n, const Site& x) const {
  if (n < 1) throw InvalidArgument("C_n: n must be >= 1");
  if (n == 1) return C1_total(x);
  if (regime() != Regime::subcritical) throw InvalidArgument("C_n: defined for the subcritical regime only");
  auto c1 = C1_total(x);
  c1.name = "C" + std::to_string(n) + site_string(x);
  if (kernel_.ratio() <= 1.0 + kEdgeTol) return c1;
  // g_n evaluated at the limits C_i(0): equals chi_n(0) when beta^(r) = 0 for r >= 3
  std::vector<double> lower;
  double lower_err = 0.0;
  for (int i = 1; i < n; ++i) {
    const auto ci = Cn_total(i, {});
    lower.push_back(ci.value);
    lower_err = std::max(lower_err, ci.error / std::max(std::abs(ci.value), 1e-300));
  }
  const double gn = g_n(law_, n, lower);
  const double occ = occupation(x);
  c1.value += gn * occ;
  c1.error += std::abs(gn * occ) * (n * lower_err + 4.0 * solver().target());
  c1.kind = ConstantKind::known_formula;
  return c1;
}

ConstantValue ConstantEvaluators::Cn_local(int n, const Site& x, const Site& y) const {
  if (n < 1) throw InvalidArgument("C_n: n must be >= 1");
  if (n == 1) return C1_local(x, y);
  if (regime() != Regime::subcritical) throw InvalidArgument("C_n: defined for the subcritical regime only");
  const auto base = C1_local(x, y);
  const auto cx0 = C1_local(x, {});
  const auto pr = predict(kernel_.d(), kernel_.alpha(), Regime::subcritical, 1, Quantity::local);
  const double decay = -2.0 * pr.p - 1.0;  // g_n ~ u_1^2
  if (!(decay > 0.0)) throw DivergentIntegral("C_n: int g_n ds diverges");

  MomentEngine eng(kernel_, law_, TruncatedLattice(kernel_.d(), options_.box_radius),
                   uniform_grid(options_.horizon, options_.grid_points));
  std::vector<std::vector<double>> m;
  for (int i = 1; i < n; ++i) m.push_back(eng.local(i, {}, y).values);
  const auto& grid = eng.grid();
  std::vector<double> gv(grid.size());
  std::vector<double> lower(n - 1);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (int i = 0; i < n - 1; ++i) lower[i] = m[i][k];
    gv[k] = g_n(law_, n, lower);
  }
  double I = 0.0, I2 = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) I += 0.5 * (grid[k] - grid[k - 1]) * (gv[k] + gv[k - 1]);
  for (std::size_t k = 2; k < grid.size(); k += 2) I2 += 0.5 * (grid[k] - grid[k - 2]) * (gv[k] + gv[k - 2]);
  const double T = grid.back();
  const double tail = gv.back() * T / decay;
  ConstantValue out{"C" + std::to_string(n) + site_string(x) + site_string(y), 0.0, 0.0, ConstantKind::estimable};
  out.value = base.value + cx0.value * (I + tail);
  out.error = base.error + std::abs(cx0.value) * (std::abs(I - I2) / 3.0 + std::abs(tail)) +
              cx0.error * std::abs(I + tail);
  return out;
}

ConstantValue ConstantEvaluators::c_supercritical(const Site& x, const Site& y) const {
  if (!report_.has_c_const()) throw InvalidArgument("c(lambda_0,x,y): needs a supercritical eigenvalue");
  const double v = report_.c_const(x, y);
  return {"c" + site_string(x) + site_string(y), v, std::abs(v) * report_.c_const_error(), ConstantKind::known_formula};
}

ConstantValue ConstantEvaluators::c_supercritical_total(const Site& x) const {
  if (!(report_.eigenvalue && *report_.eigenvalue > 0.0))
    throw InvalidArgument("supercritical total constant: needs lambda_0 > 0");
  const double l = *report_.eigenvalue;
  const auto gx = solver().green(l, x);
  const auto l2 = solver().green_l2_squared(l);
  const double v = gx.value / (l * l2.value);
  return {"c_total" + site_string(x), v, std::abs(v) * (gx.error / gx.value + l2.error / l2.value),
          ConstantKind::estimable};
}

std::optional<ConstantValue> ConstantEvaluators::evaluate(const AsymptoticPrediction& pr, const Site& x,
                                                          const Site& y) const {
  switch (pr.formula) {
    case ConstantFormula::none: return std::nullopt;
    case ConstantFormula::unit: return ConstantValue{"1", 1.0, 0.0, ConstantKind::known_formula};
    case ConstantFormula::transition_scale: return h();
    case ConstantFormula::critical_local:
    case ConstantFormula::subcritical_local:
    case ConstantFormula::supercritical_local: return C1_local(x, y);
    case ConstantFormula::critical_total:
    case ConstantFormula::subcritical_total:
    case ConstantFormula::supercritical_total: return C1_total(x);
    case ConstantFormula::subcritical_total_higher: return Cn_total(pr.n, x);
    case ConstantFormula::subcritical_local_higher: return Cn_local(pr.n, x, y);
  }
  return std::nullopt;
}

std::map<std::string, ConstantValue> ConstantEvaluators::table(const Site& x, const Site& y, int n_max) const {
  std::map<std::string, ConstantValue> out;
  auto put = [&](const ConstantValue& v) { out[v.name] = v; };
  put(h());
  const double r = kernel_.ratio();
  if (r > 1.0 + kEdgeTol) {
    put({"G0" + site_string(x), G0(x), solver().target(), ConstantKind::known_formula});
    put({"G0" + site_string(y), G0(y), solver().target(), ConstantKind::known_formula});
  }
  switch (regime()) {
    case Regime::supercritical:
      put(c_supercritical(x, y));
      put(c_supercritical_total(x));
      break;
    case Regime::critical:
      if (r > 1.0 + kEdgeTol) put(gamma());
      put(C1_total(x));
      put(C1_local(x, y));
      break;
    case Regime::subcritical:
      if (r <= 1.0 + kEdgeTol) {
        put(gamma());
        put(g(x));
        put(g(y));
      }
      for (int n = 1; n <= n_max; ++n) put(Cn_total(n, x));
      for (int n = 2; n <= n_max; ++n) put(chi(n, x));
      put(C1_local(x, y));
      break;
  }
  return out;
}

ConstantEvaluators constant_evaluators(const TransitionKernel& kernel, const BranchingLaw& law, Regime regime,
                                       ConstantOptions options) {
  ConstantEvaluators ev(kernel, law, options);
  if (ev.regime() != regime)
    throw InvalidArgument("constant_evaluators: kernel and law classify as " + regime_name(ev.regime()) +
                          ", not " + regime_name(regime));
  return ev;
}

// ---------------------------------------------------------------------------

FitReport fit(const MomentSeries& series, Form form, std::optional<FitWindow> window, bool fit_log) {
  if (series.grid.size() != series.values.size() || series.grid.empty())
    throw FitError("fit: series grid and values differ in length or are empty");
  const double T = series.grid.back();
  const FitWindow w = window.value_or(FitWindow{T / 10.0, T});
  if (!(w.t1 < w.t2)) throw FitError("fit: window must satisfy t1 < t2");
  if (w.t1 < series.grid.front() - 1e-12 || w.t2 > T * (1.0 + 1e-12))
    throw FitError("fit: window outside the series grid");

  std::vector<double> t, v;
  for (std::size_t i = 0; i < series.grid.size(); ++i)
    if (series.grid[i] >= w.t1 * (1.0 - 1e-12) && series.grid[i] <= w.t2 * (1.0 + 1e-12)) {
      t.push_back(series.grid[i]);
      v.push_back(series.values[i]);
    }
  if (t.size() < 10) throw FitError("fit: window holds " + std::to_string(t.size()) + " grid points, need 10");

  FitReport rep;
  rep.form = form;
  rep.quantity = series.quantity;
  rep.n = series.n;
  rep.x = series.x;
  rep.y = series.y;
  rep.method = provenance_name(series.provenance);
  rep.window = {t.front(), t.back()};
  rep.points = t.size();
  if (!series.trunc_diff.empty()) {
    for (std::size_t i = 0; i < series.grid.size(); ++i)
      if (series.grid[i] >= rep.window.t1 && series.values[i] != 0.0)
        rep.truncation_diff = std::max(rep.truncation_diff, std::abs(series.trunc_diff[i] / series.values[i]));
  }
  const std::size_t m = t.size();

  if (form == Form::constant_limit) {
    const std::size_t q = std::max<std::size_t>(m / 4, 1);
    double last = 0.0, third = 0.0;
    for (std::size_t i = m - q; i < m; ++i) last += v[i] / q;
    for (std::size_t i = m - 2 * q; i < m - q; ++i) third += v[i] / q;
    if (last == 0.0) throw FitError("fit: constant limit is zero");
    double ss = 0.0;
    for (std::size_t i = m - q; i < m; ++i) ss += (v[i] - last) * (v[i] - last);
    rep.limit_hat = last;
    rep.drift = std::abs(last - third) / std::abs(last);
    rep.residual = std::sqrt(ss / q) / std::abs(last);
    return rep;
  }

  for (double x : v)
    if (!(x > 0.0)) throw FitError("fit: nonpositive value in the window; log fits need positive data");
  std::vector<double> ly(m), lt(m);
  for (std::size_t i = 0; i < m; ++i) {
    ly[i] = std::log(v[i]);
    lt[i] = form == Form::exponential ? t[i] : std::log(t[i]);
  }
  auto mean = [](const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x;
    return s / static_cast<double>(a.size());
  };

  bool with_q = false;
  std::vector<double> lq;
  if (form == Form::power_log && fit_log) {
    if (!(rep.window.t1 > 1.0)) throw FitError("fit: ln ln t needs t1 > 1");
    if (std::log(w.t2) >= 3.0 * std::log(std::max(w.t1, 1.0)) * (1.0 - 1e-12)) {
      with_q = true;
      lq.resize(m);
      for (std::size_t i = 0; i < m; ++i) lq[i] = std::log(lt[i]);
    } else {
      rep.note = "q not identifiable on this window (needs ln t2 >= 3 ln t1)";
    }
  }

  const double my = mean(ly), mx = mean(lt);
  double sxx = 0, sxy = 0, szz = 0, sxz = 0, szy = 0;
  const double mz = with_q ? mean(lq) : 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = lt[i] - mx, dy = ly[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    if (with_q) {
      const double dz = lq[i] - mz;
      szz += dz * dz;
      sxz += dx * dz;
      szy += dz * dy;
    }
  }
  if (!(sxx > 0.0)) throw FitError("fit: degenerate window");
  double slope = 0.0, qv = 0.0;
  if (with_q) {
    const double det = sxx * szz - sxz * sxz;
    if (!(det > 1e-12 * sxx * szz)) throw FitError("fit: ill-conditioned (ln t, ln ln t) design");
    slope = (sxy * szz - szy * sxz) / det;
    qv = (szy * sxx - sxy * sxz) / det;
  } else {
    slope = sxy / sxx;
  }
  const double icpt = my - slope * mx - qv * mz;
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - icpt - slope * lt[i] - (with_q ? qv * lq[i] : 0.0);
    ss += r * r;
  }
  rep.residual = std::sqrt(ss / static_cast<double>(m));
  if (form == Form::exponential) {
    rep.rate_hat = slope;
    rep.limit_hat = std::exp(icpt);
  } else {
    rep.p_hat = slope;
    rep.q_hat = with_q ? qv : std::numeric_limits<double>::quiet_NaN();
    rep.q_identifiable = with_q;
    rep.limit_hat = std::exp(icpt);
  }
  return rep;
}

void judge(FitReport& rep, const AsymptoticPrediction& pr, const Tolerances& tol,
           const std::optional<ConstantValue>& constant) {
  rep.prediction = pr;
  rep.constant = constant;
  auto add_note = [&](const std::string& s) { rep.note = rep.note.empty() ? s : rep.note + "; " + s; };
  switch (pr.form) {
    case Form::power_log: {
      rep.tolerance = tol.exponent;
      double dev = std::abs(rep.p_hat - pr.p) / std::max(std::abs(pr.p), 0.1);
      if (rep.q_identifiable) dev = std::max(dev, std::abs(rep.q_hat - pr.q) / std::max(std::abs(pr.q), 1.0));
      else if (pr.q != 0.0) add_note("exponent p checked alone");
      rep.deviation = dev;
      break;
    }
    case Form::exponential:
      rep.tolerance = tol.rate;
      if (!std::isfinite(pr.rate)) throw InvalidArgument("judge: exponential prediction without lambda_0");
      rep.deviation = std::abs(rep.rate_hat - pr.rate) / pr.rate;
      break;
    case Form::constant_limit:
      rep.tolerance = tol.constant;
      if (constant) {
        rep.deviation = std::abs(rep.limit_hat - constant->value) / std::abs(constant->value);
      } else {
        rep.deviation = rep.drift;
        add_note("no constant evaluated; drift checked");
      }
      break;
  }
  rep.pass = std::isfinite(rep.deviation) && rep.deviation <= rep.tolerance;
}

std::vector<FitReport> verify(const TransitionKernel& kernel, const BranchingLaw& law, const VerifyRequest& req) {
  if (req.n_min < 1 || req.n_max < req.n_min) throw InvalidArgument("verify: need 1 <= n_min <= n_max");
  if (req.quantities.empty()) throw InvalidArgument("verify: no quantities requested");
  if (!(req.t_max > 0.0) || req.points < 11) throw InvalidArgument("verify: need t_max > 0 and >= 11 points");

  ConstantEvaluators ev(kernel, law, req.constants);
  const Regime regime = ev.regime();
  const auto lambda0 = ev.report().eigenvalue && *ev.report().eigenvalue > 0.0 ? ev.report().eigenvalue : std::nullopt;
  const auto grid = uniform_grid(req.t_max, req.points);

  std::unique_ptr<MomentEngine> engine;
  std::optional<SimulationResult> mc;
  if (req.method == VerifyMethod::ode) {
    MomentOptions mo;
    mo.truncation_diff = req.truncation_diff;
    engine = std::make_unique<MomentEngine>(kernel, law, TruncatedLattice(kernel.d(), req.box_radius), grid, mo);
  } else {
    SimulationConfig c{kernel, law, req.x, req.t_max, grid, {req.y}};
    c.n_max = req.n_max;
    c.trials = req.trials;
    c.master_seed = req.seed;
    c.threads = req.threads;
    mc = estimate(c);
  }

  std::vector<FitReport> out;
  for (Quantity q : req.quantities)
    for (int n = req.n_min; n <= req.n_max; ++n) {
      MomentSeries s;
      if (engine) {
        s = q == Quantity::total ? engine->total(n, req.x) : engine->local(n, req.x, req.y);
      } else {
        s.quantity = q;
        s.n = n;
        s.grid = grid;
        s.provenance = Provenance::monte_carlo;
        s.x = req.x;
        s.y = req.y;
        for (double t : grid) s.values.push_back(mc->find(t, quantity_name(q), n, req.y).estimate);
      }
      const auto pr = predict(kernel.d(), kernel.alpha(), regime, n, q, lambda0);
      FitReport rep;
      try {
        rep = fit(s, pr.form, req.window, pr.q != 0.0);
      } catch (const FitError& e) {
        rep.form = pr.form;
        rep.quantity = q;
        rep.n = n;
        rep.x = req.x;
        rep.y = req.y;
        rep.method = provenance_name(s.provenance);
        rep.prediction = pr;
        rep.deviation = std::numeric_limits<double>::infinity();
        rep.note = e.what();
        out.push_back(rep);
        continue;
      }
      std::optional<ConstantValue> c;
      if (req.check_constants && pr.form == Form::constant_limit && pr.constant != ConstantKind::unknown)
        c = ev.evaluate(pr, req.x, req.y);
      judge(rep, pr, req.tolerances, c);
      out.push_back(std::move(rep));
    }
  return out;
}

}  // namespace hbrw
