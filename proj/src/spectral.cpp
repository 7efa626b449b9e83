#include "hbrw/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hbrw/error.hpp"

namespace hbrw {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxHalvings = 2000;

// Below this s the symbol is replaced by its small-theta model.
constexpr double kInnerScale = 1e-4;

struct Panel {
  double lo;
  double hi;
  int nu;  // u-panels per transverse dimension (d >= 2)
};

struct PanelNodes {
  std::vector<Frequency> theta;
  std::vector<double> wk, ws, wu, phi;
  double err_s = 0.0;
  double err_u = 0.0;
  double value = 0.0;
};

double dot(const Frequency& theta, const Site& x, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += theta[k] * x[k];
  return s;
}

double l1(const Site& x, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += std::abs(x[k]);
  return s;
}

// Tensor nodes of the transverse cube [-1, 1]^(d-1) split into nu^(d-1) cells.
struct TransverseNode {
  std::array<double, 2> u;
  double wk;  // product of Kronrod weights
  double wg;  // product of Gauss weights (0 unless all Gauss)
};

std::vector<TransverseNode> transverse_nodes(int dims, int nu) {
  std::vector<TransverseNode> out;
  if (dims == 0) {
    out.push_back({{0.0, 0.0}, 1.0, 1.0});
    return out;
  }
  const double h = 1.0 / nu;  // half width of a cell
  std::vector<std::pair<double, quad::Node>> line;
  for (int c = 0; c < nu; ++c) {
    const double mid = -1.0 + (2.0 * c + 1.0) * h;
    for (const auto& n : quad::kGK15) line.push_back({mid + h * n.x, {n.x, n.wk * h, n.wg * h}});
  }
  if (dims == 1) {
    for (const auto& [u, n] : line) out.push_back({{u, 0.0}, n.wk, n.wg});
    return out;
  }
  for (const auto& [u0, n0] : line)
    for (const auto& [u1, n1] : line) out.push_back({{u0, u1}, n0.wk * n1.wk, n0.wg * n1.wg});
  return out;
}

Frequency face_direction(int d, int face, const std::array<double, 2>& u) {
  Frequency dir{};
  int j = 0;
  for (int k = 0; k < d; ++k) dir[k] = kPi * (k == face ? 1.0 : u[j++]);
  return dir;
}

// int_0^s0 s^p cos(s w) / (lambda + a s^alpha + b s^2)^k ds for the small-theta model.
quad::Estimate model_integral(double lambda, double a, double b, double alpha, int p, double s0,
                              double w, int k) {
  auto f = [&](double s) {
    const double den = lambda + a * std::pow(s, alpha) + b * s * s;
    return std::pow(s, p) * std::cos(s * w) / std::pow(den, k);
  };
  quad::Estimate acc;
  double hi = s0;
  const double q = p + 1.0 - k * alpha;  // exponent of the lambda = 0 remainder
  for (int it = 0; it < kMaxHalvings; ++it) {
    const double lo = 0.5 * hi;
    const auto e = quad::gk15(f, lo, hi);
    acc.value += e.value;
    acc.error += e.error;
    hi = lo;
    const double model = a * std::pow(hi, alpha) + b * hi * hi;
    if (lambda > 0.0 && model <= 1e-9 * lambda) {
      const double rem = std::pow(hi, p + 1.0) / ((p + 1.0) * std::pow(lambda, k));
      acc.value += rem;
      acc.error += rem * 1e-8;
      return acc;
    }
    if (q > 0.0) {
      const double bound = std::pow(hi, q) / (q * std::pow(a, k));
      if (lambda == 0.0) {
        acc.value += bound;
        acc.error += bound * std::abs(b) * std::pow(hi, 2.0 - alpha) / a * k;
        return acc;
      }
      if (bound <= 1e-15 * std::max(acc.value, 1e-300)) {
        acc.value += 0.5 * bound;
        acc.error += 0.5 * bound;
        return acc;
      }
    }
  }
  throw QuadratureBudgetExceeded("green: small-theta remainder did not converge");
}

}  // namespace

// --- GreenSolver -----------------------------------------------------------

GreenSolver::GreenSolver(TransitionKernel kernel, double x_scale, double lambda_min,
                         SpectralOptions options)
    : kernel_(std::move(kernel)), x_scale_(x_scale), lambda_min_(lambda_min), options_(options) {
  const int d = kernel_.d();
  const double alpha = kernel_.alpha();
  if (!(lambda_min >= 0.0)) throw InvalidArgument("green: lambda must be >= 0");
  if (!(x_scale >= 0.0)) throw InvalidArgument("green: x_scale must be >= 0");
  check_lambda(lambda_min, 1);
  target_ = options_.abs_tol > 0.0 ? options_.abs_tol : (d == 1 ? 1e-8 : 1e-6);
  radial_power_ = d - 1;

  const double r_eff = kernel_.tail().r_eff();
  const double xs = std::max(1.0, x_scale);
  double s_outer = 0.0;
  double width_cap = 0.0;
  double norm = 0.0;
  if (d == 1) {
    s_inner_ = kInnerScale / r_eff;
    s_outer = kPi;
    width_cap = std::min(kPi / 8.0, 3.0 / xs);
    norm = 1.0 / kPi;  // 2 * (2 pi)^-1, folding theta -> -theta
  } else {
    s_inner_ = kInnerScale / (kPi * r_eff);
    s_outer = 1.0;
    width_cap = std::min(0.125, 3.0 / (kPi * xs));
    norm = 2.0 / std::pow(2.0, d);  // 2 pi^d (2 pi)^-d, opposite faces paired
  }
  const auto u_cells = [&](double hi) {
    if (d == 1) return 1;
    return std::max(1, static_cast<int>(std::ceil(2.0 * hi * kPi * x_scale / 3.0)));
  };

  std::vector<Panel> panels;
  for (double lo = s_inner_; lo < s_outer;) {
    const double hi = std::min({2.0 * lo, lo + width_cap, s_outer});
    panels.push_back({lo, hi, u_cells(hi)});
    lo = hi;
  }

  Site x_ref{};
  x_ref[0] = static_cast<int>(std::ceil(x_scale));
  const double lambda_ref = lambda_min;

  const auto build_panel = [&](const Panel& p) {
    PanelNodes out;
    const double c = 0.5 * (p.lo + p.hi);
    const double h = 0.5 * (p.hi - p.lo);
    const auto trans = transverse_nodes(d - 1, p.nu);
    const int faces = d == 1 ? 1 : d;
    double ek0 = 0, es0 = 0, eu0 = 0, ekx = 0, esx = 0, eux = 0;
    for (const auto& sn : quad::kGK15) {
      const double s = c + h * sn.x;
      const double jac = norm * h * std::pow(s, radial_power_);
      for (int face = 0; face < faces; ++face) {
        for (const auto& tn : trans) {
          Frequency theta{};
          if (d == 1) {
            theta[0] = s;
          } else {
            const auto dir = face_direction(d, face, tn.u);
            for (int k = 0; k < d; ++k) theta[k] = s * dir[k];
          }
          const double phi = kernel_.symbol(theta);
          const double wk = jac * sn.wk * tn.wk;
          const double ws = jac * sn.wg * tn.wk;
          const double wu = d == 1 ? wk : jac * sn.wk * tn.wg;
          out.theta.push_back(theta);
          out.wk.push_back(wk);
          out.ws.push_back(ws);
          out.wu.push_back(wu);
          out.phi.push_back(phi);
          const double f0 = 1.0 / (lambda_ref - phi);
          const double fx = std::cos(dot(theta, x_ref, d)) * f0;
          ek0 += wk * f0;
          es0 += ws * f0;
          eu0 += wu * f0;
          ekx += wk * fx;
          esx += ws * fx;
          eux += wu * fx;
        }
      }
    }
    out.value = ek0;
    out.err_s = std::abs(ek0 - es0) + std::abs(ekx - esx);
    out.err_u = std::abs(ek0 - eu0) + std::abs(ekx - eux);
    return out;
  };

  std::vector<PanelNodes> built;
  built.reserve(panels.size());
  std::size_t nodes = 0;
  for (const auto& p : panels) {
    built.push_back(build_panel(p));
    nodes += built.back().wk.size();
  }

  // Refine the worst panel until the reference integrands meet the target.
  for (;;) {
    double total_err = 0.0;
    double total_val = 0.0;
    std::size_t worst = 0;
    double worst_err = -1.0;
    for (std::size_t i = 0; i < built.size(); ++i) {
      const double e = built[i].err_s + built[i].err_u;
      total_err += e;
      total_val += built[i].value;
      if (e > worst_err) {
        worst_err = e;
        worst = i;
      }
    }
    if (total_err <= 0.25 * (target_ + options_.rel_tol * std::abs(total_val))) break;
    if (nodes > options_.max_nodes) {
      std::ostringstream os;
      os << "green: quadrature rule needs more than " << options_.max_nodes
         << " nodes (estimated error " << total_err << ", target " << target_ << ")";
      throw QuadratureBudgetExceeded(os.str());
    }
    const Panel p = panels[worst];
    nodes -= built[worst].wk.size();
    if (d == 1 || built[worst].err_s >= built[worst].err_u) {
      const double mid = 0.5 * (p.lo + p.hi);
      const Panel left{p.lo, mid, p.nu};
      const Panel right{mid, p.hi, p.nu};
      panels[worst] = left;
      built[worst] = build_panel(left);
      panels.insert(panels.begin() + static_cast<std::ptrdiff_t>(worst) + 1, right);
      built.insert(built.begin() + static_cast<std::ptrdiff_t>(worst) + 1, build_panel(right));
      nodes += built[worst].wk.size() + built[worst + 1].wk.size();
    } else {
      panels[worst].nu *= 2;
      built[worst] = build_panel(panels[worst]);
      nodes += built[worst].wk.size();
    }
  }

  node_count_ = nodes;
  coords_.assign(static_cast<std::size_t>(d) * nodes, 0.0);
  wk_.reserve(nodes);
  ws_.reserve(nodes);
  wu_.reserve(nodes);
  phi_.reserve(nodes);
  std::size_t i = 0;
  for (const auto& b : built) {
    panel_start_.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t j = 0; j < b.wk.size(); ++j, ++i) {
      for (int k = 0; k < d; ++k) coords_[k * nodes + i] = b.theta[j][k];
      wk_.push_back(b.wk[j]);
      ws_.push_back(b.ws[j]);
      wu_.push_back(b.wu[j]);
      phi_.push_back(b.phi[j]);
    }
  }
  panel_start_.push_back(static_cast<std::uint32_t>(i));

  // Rays through the inner region.
  if (d == 1) {
    const double c = kernel_.small_theta_constant();
    const double phi = kernel_.symbol({s_inner_, 0.0, 0.0});
    const double b = (-phi - c * std::pow(s_inner_, alpha)) / (s_inner_ * s_inner_);
    rays_.push_back({{1.0, 0.0, 0.0}, norm, c, b});
  } else {
    for (int face = 0; face < d; ++face) {
      for (const auto& tn : transverse_nodes(d - 1, 1)) {
        const auto dir = face_direction(d, face, tn.u);
        Frequency theta{};
        for (int k = 0; k < d; ++k) theta[k] = s_inner_ * dir[k];
        const double a = -kernel_.symbol(theta) / std::pow(s_inner_, alpha);
        rays_.push_back({dir, norm * tn.wk, a, 0.0});
      }
    }
  }
}

void GreenSolver::check_lambda(double lambda, int power) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("green: lambda must be finite and >= 0");
  if (lambda == 0.0 && kernel_.d() <= power * kernel_.alpha()) {
    std::ostringstream os;
    os << "green: integral of |phi|^-" << power << " diverges at lambda = 0 for d/alpha = "
       << kernel_.ratio();
    throw DivergentIntegral(os.str());
  }
}

quad::Estimate GreenSolver::integrate(double lambda, int power, const Site* x) const {
  check_lambda(lambda, power);
  const int d = kernel_.d();
  const std::size_t n = node_count_;
  quad::Estimate total;
  std::vector<double> phase;
  for (std::size_t p = 0; p + 1 < panel_start_.size(); ++p) {
    double k = 0.0;
    double es = 0.0;
    double eu = 0.0;
    for (std::size_t i = panel_start_[p]; i < panel_start_[p + 1]; ++i) {
      double f = 1.0 / (lambda - phi_[i]);
      if (power == 2) f *= f;
      if (x != nullptr) {
        double arg = 0.0;
        for (int c = 0; c < d; ++c) arg += coords_[c * n + i] * (*x)[c];
        f *= std::cos(arg);
      }
      k += wk_[i] * f;
      es += ws_[i] * f;
      eu += wu_[i] * f;
    }
    total.value += k;
    total.error += std::abs(k - es) + std::abs(k - eu);
  }
  for (const auto& r : rays_) {
    const double w = x != nullptr ? dot(r.dir, *x, d) : 0.0;
    const auto e =
        model_integral(lambda, r.a, r.b, kernel_.alpha(), radial_power_, s_inner_, w, power);
    total.value += r.weight * e.value;
    total.error += r.weight * e.error;
  }
  return total;
}

quad::Estimate GreenSolver::green(double lambda, const Site& x) const {
  if (l1(x, kernel_.d()) > x_scale_ + 1e-9)
    throw InvalidArgument("green: |x|_1 exceeds the range the rule was built for");
  const bool origin = l1(x, kernel_.d()) == 0.0;
  const auto e = integrate(lambda, 1, origin ? nullptr : &x);
  if (e.error > target_ + options_.rel_tol * std::abs(e.value)) {
    std::ostringstream os;
    os << "green: quadrature error " << e.error << " exceeds target " << target_ << " at lambda = " << lambda;
    throw QuadratureBudgetExceeded(os.str());
  }
  return e;
}

std::vector<quad::Estimate> GreenSolver::green(double lambda, std::span<const Site> xs) const {
  std::vector<quad::Estimate> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(green(lambda, x));
  return out;
}

quad::Estimate GreenSolver::green_l2_squared(double lambda) const {
  return integrate(lambda, 2, nullptr);
}

// --- free functions --------------------------------------------------------

GreenEvaluation green(const TransitionKernel& kernel, double lambda, const Site& x, const Site& y,
                      const SpectralOptions& options) {
  Site diff{};
  for (int k = 0; k < kernel.d(); ++k) diff[k] = y[k] - x[k];
  const GreenSolver solver(kernel, l1(diff, kernel.d()), lambda, options);
  const auto e = solver.green(lambda, diff);
  return {lambda, x, y, e.value, e.error};
}

std::vector<double> i0_profile(const TransitionKernel& kernel, std::span<const double> lambdas,
                               const SpectralOptions& options) {
  if (lambdas.empty()) return {};
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw InvalidArgument("i0_profile: lambdas must be positive");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1]))
      throw InvalidArgument("i0_profile: lambda grid must be strictly decreasing");
  }
  const GreenSolver solver(kernel, 0.0, lambdas.back(), options);
  std::vector<double> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) out.push_back(solver.green(l, Site{}).value);
  return out;
}

namespace {

double critical_value(const GreenSolver& solver, double* g0 = nullptr) {
  if (solver.kernel().ratio() <= 1.0) {
    if (g0) *g0 = 0.0;
    return 0.0;
  }
  const double g = solver.green(0.0, Site{}).value;
  if (g0) *g0 = g;
  return 1.0 / g;
}

std::unique_ptr<GreenSolver> spectral_solver(const TransitionKernel& kernel, double x_scale,
                                             const SpectralOptions& options) {
  const double lambda_min = kernel.ratio() > 1.0 ? 0.0 : 1e-12;
  return std::make_unique<GreenSolver>(kernel, x_scale, lambda_min, options);
}

bool is_critical(double beta, double bc, double tol) {
  return std::abs(beta - bc) <= tol * std::max(bc, 1.0);
}

double find_root(const GreenSolver& solver, double beta, const EigenOptions& options) {
  const auto f = [&](double lambda) { return beta * solver.green(lambda, Site{}).value - 1.0; };

  double lo = 0.0;
  double hi = 0.0;
  double flo = 0.0;
  double fhi = 0.0;
  if (options.bracket) {
    lo = options.bracket->first;
    hi = options.bracket->second;
    if (!(lo > 0.0 && hi > lo)) throw InvalidArgument("solve_eigenvalue: bracket must satisfy 0 < lo < hi");
    flo = f(lo);
    fhi = f(hi);
    if (!(flo >= 0.0 && fhi <= 0.0))
      throw BracketNotFound("solve_eigenvalue: supplied bracket does not enclose the root");
  } else {
    hi = 1e12;
    fhi = f(hi);
    bool found = false;
    while (hi > 1e-12 * 1.0000001) {
      lo = hi / 10.0;
      flo = f(lo);
      if (flo >= 0.0) {
        found = true;
        break;
      }
      hi = lo;
      fhi = flo;
    }
    if (!found || fhi > 0.0)
      throw BracketNotFound("solve_eigenvalue: beta I_0(lambda) = 1 has no root in [1e-12, 1e12]");
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;

  // Illinois variant of regula falsi, with bisection as a fallback.
  int side = 0;
  for (int it = 0; it < 500; ++it) {
    double mid = 0.5 * (lo + hi);
    if (options.method == RootMethod::illinois) {
      mid = (lo * fhi - hi * flo) / (fhi - flo);
      if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    }
    const double fm = f(mid);
    if (std::abs(fm) <= options.residual_tol) return mid;
    if (fm > 0.0) {
      lo = mid;
      flo = fm;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      fhi = fm;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      const double best = std::abs(flo) < std::abs(fhi) ? lo : hi;
      if (std::abs(f(best)) <= options.residual_tol) return best;
      throw BracketNotFound("solve_eigenvalue: bracket collapsed before the residual target was met");
    }
  }
  throw BracketNotFound("solve_eigenvalue: no convergence in 500 iterations");
}

std::optional<double> eigenvalue_with(const GreenSolver& solver, double beta, double bc,
                                      const EigenOptions& options) {
  if (is_critical(beta, bc, options.spectral.critical_tol)) {
    if (solver.kernel().ratio() > 2.0) return 0.0;
    return std::nullopt;
  }
  if (beta < bc) return std::nullopt;
  return find_root(solver, beta, options);
}

}  // namespace

double beta_c(const TransitionKernel& kernel, const SpectralOptions& options) {
  if (kernel.ratio() <= 1.0) return 0.0;
  const GreenSolver solver(kernel, 0.0, 0.0, options);
  return critical_value(solver);
}

bool l2_admissible(const TransitionKernel& kernel) {
  // Shell integrals of |phi|^-2 deep inside the power-law regime; their ratio
  // tends to 2^(2 alpha - d), so the sum over shells converges iff it is < 1.
  const int d = kernel.d();
  const double t0 = 1e-30 / kernel.tail().r_eff();
  const auto shell = [&](double hi) {
    const double lo = 0.5 * hi;
    const auto trans = transverse_nodes(d - 1, 1);
    const int faces = d == 1 ? 1 : d;
    return quad::gk15(
               [&](double s) {
                 double acc = 0.0;
                 for (int face = 0; face < faces; ++face) {
                   for (const auto& tn : trans) {
                     Frequency theta{};
                     const auto dir = d == 1 ? Frequency{1.0, 0.0, 0.0} : face_direction(d, face, tn.u);
                     for (int k = 0; k < d; ++k) theta[k] = s * dir[k];
                     const double phi = kernel.symbol(theta);
                     acc += tn.wk * std::pow(s, d - 1) / (phi * phi);
                   }
                 }
                 return acc;
               },
               lo, hi)
        .value;
  };
  const double ratio = shell(0.5 * t0) / shell(t0);
  return ratio < 1.0 - 1e-9;
}

std::optional<double> solve_eigenvalue(const TransitionKernel& kernel, double beta,
                                       const EigenOptions& options) {
  if (!(beta >= 0.0)) throw InvalidArgument("solve_eigenvalue: beta must be >= 0");
  const auto solver = spectral_solver(kernel, 0.0, options.spectral);
  const double bc = critical_value(*solver);
  return eigenvalue_with(*solver, beta, bc, options);
}

std::map<Site, double> eigenfunction(const TransitionKernel& kernel, double beta, double lambda0,
                                     int box_radius, const SpectralOptions& options) {
  if (box_radius < 0) throw InvalidArgument("eigenfunction: box_radius must be >= 0");
  if (!(lambda0 >= 0.0)) throw InvalidArgument("eigenfunction: lambda0 must be >= 0");
  if (lambda0 == 0.0 && !l2_admissible(kernel))
    throw InvalidArgument("eigenfunction: lambda0 = 0 is not admissible (G_0 is not square-summable for d/alpha <= 2)");
  const int d = kernel.d();
  const GreenSolver solver(kernel, static_cast<double>(d) * box_radius, lambda0, options);
  const double i0 = solver.green(lambda0, Site{}).value;
  if (std::abs(beta * i0 - 1.0) > 1e-6)
    throw InvalidArgument("eigenfunction: (beta, lambda0) does not satisfy beta I_0(lambda0) = 1");

  std::vector<Site> sites;
  const int r = box_radius;
  for (int a = -r; a <= r; ++a)
    for (int b = (d >= 2 ? -r : 0); b <= (d >= 2 ? r : 0); ++b)
      for (int c = (d >= 3 ? -r : 0); c <= (d >= 3 ? r : 0); ++c) sites.push_back({a, b, c});
  const auto values = solver.green(lambda0, sites);
  std::map<Site, double> f;
  for (std::size_t i = 0; i < sites.size(); ++i) f[sites[i]] = values[i].value / i0;
  return f;
}

std::string band_name(Band band) {
  switch (band) {
    case Band::half_to_one:
      return "(1/2,1]";
    case Band::one_to_two:
      return "(1,2]";
    case Band::above_two:
      return "(2,inf)";
  }
  return "?";
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::subcritical:
      return "subcritical";
    case Regime::critical:
      return "critical";
    case Regime::supercritical:
      return "supercritical";
  }
  return "?";
}

Band band_of(double ratio) {
  if (!(ratio > 0.5)) throw InvalidArgument("band: d/alpha must exceed 1/2");
  if (ratio <= 1.0) return Band::half_to_one;
  if (ratio <= 2.0) return Band::one_to_two;
  return Band::above_two;
}

double RegimeReport::c_const(const Site& x, const Site& y) const {
  if (!has_c_const()) throw InvalidArgument("c_const: only available with an eigenvalue");
  const double l = *eigenvalue;
  return solver_->green(l, x).value * solver_->green(l, y).value / l2_;
}

double RegimeReport::c_const_error() const {
  if (!has_c_const()) return 0.0;
  return l2_error_ / l2_;
}

RegimeReport classify(const TransitionKernel& kernel, const BranchingLaw& law, double tol,
                      const SpectralOptions& options, double reach) {
  if (!(tol > 0.0)) throw InvalidArgument("classify: tol must be > 0");
  RegimeReport rep;
  rep.ratio = kernel.ratio();
  rep.band = band_of(rep.ratio);
  rep.beta = law.beta();
  auto solver = spectral_solver(kernel, reach, options);
  rep.beta_c = critical_value(*solver, &rep.g0);
  if (is_critical(rep.beta, rep.beta_c, tol))
    rep.classification = Regime::critical;
  else if (rep.beta > rep.beta_c)
    rep.classification = Regime::supercritical;
  else
    rep.classification = Regime::subcritical;

  if (rep.beta >= 0.0) {
    EigenOptions eo;
    eo.spectral = options;
    eo.spectral.critical_tol = tol;
    rep.eigenvalue = eigenvalue_with(*solver, rep.beta, rep.beta_c, eo);
  }
  if (rep.eigenvalue) {
    const double l = *rep.eigenvalue;
    const auto i0 = solver->green(l, Site{});
    rep.residual = std::abs(rep.beta * i0.value - 1.0);
    rep.quad_error = i0.error;
    if (l > 0.0 || kernel.d() > 2.0 * kernel.alpha()) {
      const auto l2 = solver->green_l2_squared(l);
      rep.l2_ = l2.value;
      rep.l2_error_ = l2.error;
    }
  }
  if (rep.eigenvalue && rep.l2_ > 0.0) rep.solver_ = std::move(solver);
  return rep;
}

}  // namespace hbrw
