#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hbrw/kernel.hpp"
#include "hbrw/moments.hpp"
#include "hbrw/spectral.hpp"

namespace hbrw {

// Finer partition of d/alpha than Band: the critical tables change at 1,
// 3/2 and 2, with separate rows at the edges themselves.
enum class AsymptoticBand {
  half_to_one,          // (1/2, 1)
  one,                  // = 1
  one_to_three_halves,  // (1, 3/2)
  three_halves,         // = 3/2
  three_halves_to_two,  // (3/2, 2)
  two,                  // = 2
  above_two             // (2, inf)
};

std::string asymptotic_band_name(AsymptoticBand band);
// Edges are matched within `tol`.
AsymptoticBand asymptotic_band(double ratio, double tol = 1e-9);
const std::vector<AsymptoticBand>& all_asymptotic_bands();
// A representative d/alpha inside the band (the edge itself for edge rows).
double band_representative(AsymptoticBand band);

enum class Form { power_log, exponential, constant_limit };
std::string form_name(Form form);
Form parse_form(const std::string& name);

enum class ConstantKind { known_formula, estimable, unknown };
std::string constant_kind_name(ConstantKind kind);

// Which evaluator produces the leading constant.
enum class ConstantFormula {
  none,
  unit,                     // C = 1
  transition_scale,         // h: p(t,x,y) ~ h t^(-d/alpha)
  critical_local,           // G0(x,0) G0(0,y) / gamma [/ Gamma(d/alpha - 1)]
  critical_total,           // G0(x,0) / gamma [/ Gamma(d/alpha)]
  subcritical_total,        // C_1(x), all bands
  subcritical_local,        // C_1(x, y), all bands
  subcritical_total_higher, // C_n(x)
  subcritical_local_higher, // C_n(x, y)
  supercritical_local,      // c(lambda_0, x, y)
  supercritical_total       // G_lambda0(x,0) / (lambda_0 ||G_lambda0||^2)
};
std::string constant_formula_name(ConstantFormula formula);

// Leading term C t^p (ln t)^q, C e^(rate t), or a constant limit C.
struct AsymptoticPrediction {
  Regime regime = Regime::critical;
  AsymptoticBand band = AsymptoticBand::above_two;
  int n = 1;
  Quantity quantity = Quantity::total;

  Form form = Form::power_log;
  double p = 0.0;
  double q = 0.0;
  // Exponential form: rate = rate_multiple * lambda_0 (NaN until lambda_0 is known).
  double rate_multiple = 0.0;
  double rate = 0.0;
  ConstantKind constant = ConstantKind::unknown;
  ConstantFormula formula = ConstantFormula::none;
  std::string tag;  // e.g. "critical/total/n", stable across versions

  std::string describe() const;
};

AsymptoticPrediction predict(int d, double alpha, Regime regime, int n, Quantity quantity,
                             std::optional<double> lambda0 = std::nullopt);

struct ConstantValue {
  std::string name;
  double value = 0.0;
  double error = 0.0;  // numerical error estimate (quadrature, cutoff tails)
  ConstantKind kind = ConstantKind::estimable;
};

struct ConstantOptions {
  SpectralOptions spectral{};
  // Truncated lattice and horizon for the time integrals in g(x) and C_n(x, y).
  int box_radius = 2000;
  double horizon = 200.0;
  std::size_t grid_points = 2001;
  // Largest |x|_1 + |y|_1 queried (sizes the quadrature rule).
  double reach = 16.0;
};

// Leading constants of the moment asymptotics for one kernel and law.
// Spectral constants are cached on first use; the time integrals run one
// ODE solve per query.
class ConstantEvaluators {
 public:
  ConstantEvaluators(TransitionKernel kernel, BranchingLaw law, ConstantOptions options = {});
  ~ConstantEvaluators();
  ConstantEvaluators(ConstantEvaluators&&) noexcept;
  ConstantEvaluators& operator=(ConstantEvaluators&&) noexcept;

  const RegimeReport& report() const { return report_; }
  Regime regime() const { return report_.classification; }
  const TransitionKernel& kernel() const { return kernel_; }
  const BranchingLaw& law() const { return law_; }

  // G_0(x, 0); DivergentIntegral for d/alpha <= 1.
  double G0(const Site& x) const;
  // h in p(t, x, y) ~ h t^(-d/alpha), from the small-theta symbol.
  ConstantValue h() const;
  // gamma of the Tauberian step: critical transient bands, or gamma_{1,alpha}
  // for the recurrent subcritical bands.
  ConstantValue gamma() const;
  // g(x) = 1 - beta int_0^inf (p(t,0,0) - p(t,x,0)) dt
  ConstantValue g(const Site& x) const;
  ConstantValue C1_total(const Site& x) const;
  ConstantValue C1_local(const Site& x, const Site& y) const;
  // chi_n(x) = beta2/2 sum_i binom(n,i) C_i(x) C_{n-i}(x)
  ConstantValue chi(int n, const Site& x) const;
  ConstantValue Cn_total(int n, const Site& x) const;
  ConstantValue Cn_local(int n, const Site& x, const Site& y) const;
  ConstantValue c_supercritical(const Site& x, const Site& y) const;
  ConstantValue c_supercritical_total(const Site& x) const;

  // The constant of a prediction, or nullopt when the prediction has none.
  std::optional<ConstantValue> evaluate(const AsymptoticPrediction& prediction, const Site& x,
                                        const Site& y = {}) const;
  // Every constant defined for the regime, by name.
  std::map<std::string, ConstantValue> table(const Site& x, const Site& y, int n_max) const;

 private:
  const GreenSolver& solver() const;
  // int_0^inf m_1(s, x, 0) ds (subcritical transient)
  double occupation(const Site& x) const;

  TransitionKernel kernel_;
  BranchingLaw law_;
  ConstantOptions options_;
  RegimeReport report_;
  mutable std::shared_ptr<const GreenSolver> solver_;
  mutable std::map<Site, double> g0_cache_;
  mutable std::optional<ConstantValue> gamma_cache_;
};

// Constants for an expected regime; InvalidArgument if the kernel and law
// classify differently.
ConstantEvaluators constant_evaluators(const TransitionKernel& kernel, const BranchingLaw& law,
                                       Regime regime, ConstantOptions options = {});

struct FitWindow {
  double t1 = 0.0;
  double t2 = 0.0;
};

struct FitReport {
  Form form = Form::power_log;
  Quantity quantity = Quantity::total;
  int n = 1;
  Site x{};
  Site y{};
  std::string method;

  double p_hat = 0.0;
  double q_hat = 0.0;
  bool q_identifiable = false;
  double rate_hat = 0.0;
  double limit_hat = 0.0;
  double drift = 0.0;  // constant_limit: relative change between the last two quartiles
  FitWindow window{};
  std::size_t points = 0;
  double residual = 0.0;  // rms of the fit residual in log space (or relative for limits)
  double truncation_diff = 0.0;

  std::optional<AsymptoticPrediction> prediction;
  std::optional<ConstantValue> constant;
  double tolerance = 0.0;
  double deviation = 0.0;  // measured against the tolerance
  bool pass = false;
  std::string note;
};

// Log-space regression of the series on the window (default [T/10, T]).
// With fit_log, q is fitted only when ln t2 >= 3 ln t1 (two decades from
// t1 = 10); otherwise q is reported as not identifiable.
FitReport fit(const MomentSeries& series, Form form, std::optional<FitWindow> window = std::nullopt,
              bool fit_log = false);

struct Tolerances {
  double exponent = 0.15;
  double constant = 0.02;
  double rate = 0.05;
};

enum class VerifyMethod { ode, monte_carlo };

struct VerifyRequest {
  std::vector<Quantity> quantities{Quantity::total};
  int n_min = 1;
  int n_max = 1;
  Site x{};
  Site y{};
  double t_max = 100.0;
  std::size_t points = 1001;
  std::optional<FitWindow> window;
  VerifyMethod method = VerifyMethod::ode;
  int box_radius = 2000;
  bool truncation_diff = false;
  Tolerances tolerances{};
  // Compare the fitted limit against the evaluated constant when available.
  bool check_constants = true;
  // Monte Carlo only
  std::uint64_t trials = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  ConstantOptions constants{};
};

// classify -> moments (ODE/recursion or Monte Carlo) -> predict -> fit ->
// compare; one report per (quantity, n).
std::vector<FitReport> verify(const TransitionKernel& kernel, const BranchingLaw& law,
                              const VerifyRequest& request);

// Apply the verdict of `prediction` to a finished fit.
void judge(FitReport& report, const AsymptoticPrediction& prediction, const Tolerances& tolerances,
           const std::optional<ConstantValue>& constant);

}  // namespace hbrw
