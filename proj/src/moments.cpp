#include "hbrw/moments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hbrw/error.hpp"

namespace hbrw {

std::string quantity_name(Quantity q) { return q == Quantity::local ? "local" : "total"; }

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::ode:
      return "ode";
    case Provenance::integral_recursion:
      return "integral-recursion";
    case Provenance::monte_carlo:
      return "monte-carlo";
  }
  return "?";
}

std::vector<double> uniform_grid(double t_max, std::size_t points) {
  if (points < 2 || !(t_max > 0.0)) throw InvalidArgument("grid: need >= 2 points and t_max > 0");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = t_max * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

namespace {

bool is_uniform(std::span<const double> grid) {
  if (grid.size() < 2 || grid[0] != 0.0) return false;
  const double h = grid.back() / static_cast<double>(grid.size() - 1);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - h * static_cast<double>(i)) > 1e-9 * grid.back()) return false;
  return true;
}

std::vector<double> trapezoid(std::span<const double> f, std::span<const double> g, double h,
                              std::size_t stride) {
  const std::size_t n = f.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = stride; i < n; i += stride) {
    double s = 0.5 * (f[i] * g[0] + f[0] * g[i]);
    for (std::size_t j = stride; j < i; j += stride) s += f[i - j] * g[j];
    out[i] = s * h * static_cast<double>(stride);
  }
  return out;
}

}  // namespace

Convolution convolve(std::span<const double> f, std::span<const double> g, std::span<const double> grid) {
  if (f.size() != grid.size() || g.size() != grid.size())
    throw InvalidArgument("convolve: mismatched grids (series lengths differ from the grid)");
  if (!is_uniform(grid)) throw InvalidArgument("convolve: mismatched grids (grid must be uniform from 0)");
  const std::size_t n = grid.size();
  const double h = grid[1] - grid[0];
  Convolution out;
  out.values = trapezoid(f, g, h, 1);
  out.error.assign(n, 0.0);
  if (n < 5) return out;
  const auto coarse = trapezoid(f, g, h, 2);
  for (std::size_t i = 2; i < n; i += 2) out.error[i] = std::abs(out.values[i] - coarse[i]) / 3.0;
  for (std::size_t i = 1; i < n; i += 2) {
    const double left = i >= 2 ? out.error[i - 1] : out.error[i + 1];
    const double right = i + 1 < n ? out.error[i + 1] : left;
    out.error[i] = std::max(left, right);
  }
  return out;
}

// --- MomentEngine ------------------------------------------------------------

MomentEngine::MomentEngine(TransitionKernel kernel, BranchingLaw law, TruncatedLattice lattice,
                           std::vector<double> grid, MomentOptions options)
    : kernel_(std::move(kernel)),
      law_(std::move(law)),
      lattice_(lattice),
      grid_(std::move(grid)),
      options_(options) {
  if (grid_.empty()) throw InvalidArgument("moments: empty time grid");
  for (std::size_t i = 0; i < grid_.size(); ++i)
    if (!(grid_[i] >= 0.0) || (i > 0 && !(grid_[i] > grid_[i - 1])))
      throw InvalidArgument("moments: time grid must be strictly increasing and >= 0");
  op_ = std::make_unique<BoxOperator>(kernel_, lattice_, options_.method);
  watch_.push_back(Site{});
}

MomentEngine::~MomentEngine() = default;

void MomentEngine::check_uniform() const {
  if (!is_uniform(grid_))
    throw InvalidArgument("moments: higher moments need a uniform grid starting at t = 0");
}

MomentEngine& MomentEngine::doubled() {
  if (!doubled_) {
    MomentOptions o = options_;
    o.truncation_diff = false;
    doubled_ = std::make_unique<MomentEngine>(kernel_, law_,
                                              TruncatedLattice(lattice_.d(), 2 * lattice_.radius()),
                                              grid_, o);
  }
  return *doubled_;
}

MomentEngine::Solve MomentEngine::run(const std::vector<double>& initial, double beta,
                                      const std::vector<Site>& watch) {
  const std::size_t n = lattice_.size();
  const std::size_t w = watch.size();
  const std::size_t origin = lattice_.origin();
  std::vector<std::size_t> watch_idx;
  for (const auto& s : watch) watch_idx.push_back(lattice_.index(s));
  const auto exit = op_->exit_rates();

  std::vector<double> y0(n + 1 + w, 0.0);
  std::copy(initial.begin(), initial.end(), y0.begin());

  const auto rhs = [&](double, std::span<const double> y, std::span<double> dy) {
    const auto m = y.first(n);
    auto dm = dy.first(n);
    op_->apply(m, dm);
    dm[origin] += beta * m[origin];
    double leak = 0.0;
    for (std::size_t i = 0; i < n; ++i) leak += exit[i] * m[i];
    dy[n] = leak;
    for (std::size_t k = 0; k < w; ++k) dy[n + 1 + k] = m[watch_idx[k]];
  };

  Solve out;
  for (const auto& s : watch) {
    out.value[s].resize(grid_.size());
    out.integral[s].resize(grid_.size());
  }
  out.leak.resize(grid_.size());
  out.in_box.resize(grid_.size());
  const auto observe = [&](std::size_t i, std::span<const double> y) {
    double mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) mass += y[k];
    out.in_box[i] = mass;
    out.leak[i] = y[n];
    for (std::size_t k = 0; k < w; ++k) {
      out.value[watch[k]][i] = y[watch_idx[k]];
      out.integral[watch[k]][i] = y[n + 1 + k];
    }
    const double lost = y[n] / std::max(y[n] + mass, 1e-300);
    if (lost > options_.leak_budget) {
      std::ostringstream os;
      os << "moments: box radius " << lattice_.radius() << " lost " << lost << " of the mass by t = "
         << grid_[i] << " (budget " << options_.leak_budget << ")";
      throw BoxTooSmall(os.str());
    }
  };
  DormandPrince(options_.ode).integrate(rhs, y0, 0.0, grid_, observe);
  return out;
}

const MomentEngine::Solve& MomentEngine::solve(const Site& source, double beta,
                                               const std::vector<Site>& watch) {
  for (const auto& s : watch) {
    if (!lattice_.contains(s)) throw InvalidArgument("moments: point outside the truncated lattice");
    if (std::find(watch_.begin(), watch_.end(), s) == watch_.end()) watch_.push_back(s);
  }
  const auto key = std::make_pair(source, beta);
  auto it = solves_.find(key);
  const bool complete = it != solves_.end() &&
                        std::all_of(watch.begin(), watch.end(),
                                    [&](const Site& s) { return it->second.value.count(s) > 0; });
  if (complete) return it->second;
  std::vector<double> initial(lattice_.size(), 0.0);
  if (source == Site{1 << 30, 0, 0}) {
    std::fill(initial.begin(), initial.end(), 1.0);
  } else {
    if (!lattice_.contains(source)) throw InvalidArgument("moments: point outside the truncated lattice");
    initial[lattice_.index(source)] = 1.0;
  }
  solves_[key] = run(initial, beta, watch_);
  return solves_[key];
}

namespace {
// Marker "source" for the all-ones initial condition.
const Site kAllOnes{1 << 30, 0, 0};
}  // namespace

const std::vector<double>& MomentEngine::first_local(const Site& x, const Site& y) {
  return solve(y, law_.beta(), {x}).value.at(x);
}

const std::vector<double>& MomentEngine::first_total(const Site& x) {
  const std::pair<int, Site> key{-1, x};
  auto it = source_local_.find(key);
  if (it != source_local_.end()) return it->second;
  const auto& s = solve(Site{}, law_.beta(), {x});
  std::vector<double> v(grid_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + law_.beta() * s.integral.at(x)[i];
  return source_local_[key] = std::move(v);
}

const std::vector<double>& MomentEngine::higher_source_local(int k, const Site& y) {
  const auto key = std::make_pair(k, y);
  auto it = source_local_.find(key);
  if (it != source_local_.end()) return it->second;
  if (k == 1) {
    // m_1(t, 0, y) = m_1(t, y, 0) by symmetry of H_beta
    source_local_err_[key].assign(grid_.size(), 0.0);
    return source_local_[key] = solve(Site{}, law_.beta(), {y}).value.at(y);
  }
  std::vector<std::vector<double>> lower;
  double lower_rel = 0.0;
  for (int j = 1; j < k; ++j) {
    lower.push_back(higher_source_local(j, y));
    const auto& e = source_local_err_[{j, y}];
    for (std::size_t i = 0; i < e.size(); ++i)
      if (lower.back()[i] > 0.0) lower_rel = std::max(lower_rel, e[i] / lower.back()[i]);
  }
  std::vector<double> g(grid_.size());
  std::vector<double> m(k - 1);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (int j = 0; j < k - 1; ++j) m[j] = lower[j][i];
    g[i] = g_n(law_, k, m);
  }
  const auto& m00 = solve(Site{}, law_.beta(), {Site{}}).value.at(Site{});
  const auto c = convolve(m00, g, grid_);
  std::vector<double> v(grid_.size());
  std::vector<double> err(grid_.size());
  const auto& base = source_local_.at({1, y});
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = base[i] + c.values[i];
    err[i] = c.error[i] + k * lower_rel * std::abs(c.values[i]);
  }
  source_local_err_[key] = std::move(err);
  return source_local_[key] = std::move(v);
}

const std::vector<double>& MomentEngine::higher_source_total(int k) {
  auto it = source_total_.find(k);
  if (it != source_total_.end()) return it->second;
  if (k == 1) {
    source_total_err_[1].assign(grid_.size(), 0.0);
    return source_total_[1] = first_total(Site{});
  }
  std::vector<std::vector<double>> lower;
  double lower_rel = 0.0;
  for (int j = 1; j < k; ++j) {
    lower.push_back(higher_source_total(j));
    const auto& e = source_total_err_[j];
    for (std::size_t i = 0; i < e.size(); ++i)
      if (lower.back()[i] > 0.0) lower_rel = std::max(lower_rel, e[i] / lower.back()[i]);
  }
  std::vector<double> g(grid_.size());
  std::vector<double> m(k - 1);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (int j = 0; j < k - 1; ++j) m[j] = lower[j][i];
    g[i] = g_n(law_, k, m);
  }
  const auto& m00 = solve(Site{}, law_.beta(), {Site{}}).value.at(Site{});
  const auto c = convolve(m00, g, grid_);
  std::vector<double> v(grid_.size());
  std::vector<double> err(grid_.size());
  const auto& base = source_total_.at(1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = base[i] + c.values[i];
    err[i] = c.error[i] + k * lower_rel * std::abs(c.values[i]);
  }
  source_total_err_[k] = std::move(err);
  return source_total_[k] = std::move(v);
}

MomentSeries MomentEngine::make_series(Quantity q, int n, const Site& x, const Site& y, Provenance p) const {
  MomentSeries s;
  s.quantity = q;
  s.n = n;
  s.grid = grid_;
  s.provenance = p;
  s.truncation_radius = lattice_.radius();
  s.kernel_id = kernel_.id();
  s.law_id = law_.id();
  s.x = x;
  s.y = y;
  return s;
}

MomentSeries MomentEngine::transition_probability(const Site& x, const Site& y) {
  auto s = make_series(Quantity::local, 1, x, y, Provenance::ode);
  s.law_id = "b={}";
  const auto& sol = solve(y, 0.0, {x});
  s.values = sol.value.at(x);
  s.leak = sol.leak;
  if (options_.truncation_diff) {
    const auto other = doubled().transition_probability(x, y);
    s.trunc_diff.resize(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) s.trunc_diff[i] = other.values[i] - s.values[i];
  }
  return s;
}

MomentSeries MomentEngine::local(int n, const Site& x, const Site& y) {
  if (n < 1) throw InvalidArgument("moments: n must be >= 1");
  if (n > kMaxMomentOrder) throw InvalidArgument("moments: n must be <= 12");
  auto s = make_series(Quantity::local, n, x, y, n == 1 ? Provenance::ode : Provenance::integral_recursion);
  s.values = first_local(x, y);
  s.leak = solve(y, law_.beta(), {x}).leak;
  if (n >= 2) {
    check_uniform();
    std::vector<std::vector<double>> lower;
    double lower_rel = 0.0;
    for (int j = 1; j < n; ++j) {
      lower.push_back(higher_source_local(j, y));
      const auto& e = source_local_err_.at({j, y});
      for (std::size_t i = 0; i < e.size(); ++i)
        if (lower.back()[i] > 0.0) lower_rel = std::max(lower_rel, e[i] / lower.back()[i]);
    }
    std::vector<double> g(grid_.size());
    std::vector<double> m(n - 1);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      for (int j = 0; j < n - 1; ++j) m[j] = lower[j][i];
      g[i] = g_n(law_, n, m);
    }
    const auto c = convolve(solve(Site{}, law_.beta(), {x}).value.at(x), g, grid_);
    s.error.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      s.values[i] += c.values[i];
      s.error[i] = c.error[i] + n * lower_rel * std::abs(c.values[i]);
      if (s.error[i] > options_.conv_rel_tol * std::max(std::abs(s.values[i]), 1e-300)) {
        std::ostringstream os;
        os << "moments: convolution error " << s.error[i] << " at t = " << grid_[i]
           << " exceeds " << options_.conv_rel_tol << " of the value; refine the time grid";
        throw GridTooCoarse(os.str());
      }
    }
  }
  if (options_.truncation_diff) {
    const auto other = doubled().local(n, x, y);
    s.trunc_diff.resize(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) s.trunc_diff[i] = other.values[i] - s.values[i];
  }
  return s;
}

MomentSeries MomentEngine::total(int n, const Site& x) {
  if (n < 1) throw InvalidArgument("moments: n must be >= 1");
  if (n > kMaxMomentOrder) throw InvalidArgument("moments: n must be <= 12");
  auto s = make_series(Quantity::total, n, x, Site{}, n == 1 ? Provenance::ode : Provenance::integral_recursion);
  s.values = first_total(x);
  if (n == 1) {
    const auto& direct = solve(kAllOnes, law_.beta(), {x});
    s.cross_check = direct.value.at(x);
    s.leak.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) s.leak[i] = s.values[i] - s.cross_check[i];
  } else {
    check_uniform();
    std::vector<std::vector<double>> lower;
    double lower_rel = 0.0;
    for (int j = 1; j < n; ++j) {
      lower.push_back(higher_source_total(j));
      const auto& e = source_total_err_.at(j);
      for (std::size_t i = 0; i < e.size(); ++i)
        if (lower.back()[i] > 0.0) lower_rel = std::max(lower_rel, e[i] / lower.back()[i]);
    }
    std::vector<double> g(grid_.size());
    std::vector<double> m(n - 1);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      for (int j = 0; j < n - 1; ++j) m[j] = lower[j][i];
      g[i] = g_n(law_, n, m);
    }
    const auto c = convolve(solve(Site{}, law_.beta(), {x}).value.at(x), g, grid_);
    s.error.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      s.values[i] += c.values[i];
      s.error[i] = c.error[i] + n * lower_rel * std::abs(c.values[i]);
      if (s.error[i] > options_.conv_rel_tol * std::max(std::abs(s.values[i]), 1e-300)) {
        std::ostringstream os;
        os << "moments: convolution error " << s.error[i] << " at t = " << grid_[i]
           << " exceeds " << options_.conv_rel_tol << " of the value; refine the time grid";
        throw GridTooCoarse(os.str());
      }
    }
  }
  if (options_.truncation_diff) {
    const auto other = doubled().total(n, x);
    s.trunc_diff.resize(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) s.trunc_diff[i] = other.values[i] - s.values[i];
  }
  return s;
}

// --- free functions ----------------------------------------------------------

namespace {

MomentEngine engine(const TransitionKernel& kernel, const BranchingLaw& law, const TruncatedLattice& lattice,
                    std::span<const double> t_grid, const MomentOptions& options) {
  return MomentEngine(kernel, law, lattice, std::vector<double>(t_grid.begin(), t_grid.end()), options);
}

}  // namespace

MomentSeries transition_probability(const TransitionKernel& kernel, const TruncatedLattice& lattice,
                                    std::span<const double> t_grid, const Site& x, const Site& y,
                                    const MomentOptions& options) {
  return engine(kernel, build_branching({}, 1), lattice, t_grid, options).transition_probability(x, y);
}

MomentSeries m1_local(const TransitionKernel& kernel, const BranchingLaw& law, const TruncatedLattice& lattice,
                      std::span<const double> t_grid, const Site& x, const Site& y, const MomentOptions& options) {
  return engine(kernel, law, lattice, t_grid, options).local(1, x, y);
}

MomentSeries m1_total(const TransitionKernel& kernel, const BranchingLaw& law, const TruncatedLattice& lattice,
                      std::span<const double> t_grid, const Site& x, const MomentOptions& options) {
  return engine(kernel, law, lattice, t_grid, options).total(1, x);
}

MomentSeries mn_local(const TransitionKernel& kernel, const BranchingLaw& law, const TruncatedLattice& lattice,
                      std::span<const double> t_grid, const Site& x, const Site& y, int n,
                      const MomentOptions& options) {
  return engine(kernel, law, lattice, t_grid, options).local(n, x, y);
}

MomentSeries mn_total(const TransitionKernel& kernel, const BranchingLaw& law, const TruncatedLattice& lattice,
                      std::span<const double> t_grid, const Site& x, int n, const MomentOptions& options) {
  return engine(kernel, law, lattice, t_grid, options).total(n, x);
}

}  // namespace hbrw
