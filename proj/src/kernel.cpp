#include "hbrw/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "hbrw/error.hpp"

namespace hbrw {

double norm(const Site& z, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += static_cast<double>(z[k]) * z[k];
  return std::sqrt(s);
}

double norm(const Frequency& theta, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += theta[k] * theta[k];
  return std::sqrt(s);
}

// --- AngularWeight ---------------------------------------------------------

AngularWeight AngularWeight::constant(double c) {
  std::ostringstream os;
  os.precision(17);
  os << "const " << c;
  return AngularWeight([c](std::span<const double>) { return c; }, os.str(), true);
}

AngularWeight AngularWeight::cubic(double a, double b) {
  std::ostringstream os;
  os.precision(17);
  os << "cubic " << a << ' ' << b;
  return AngularWeight(
      [a, b](std::span<const double> u) {
        double s = 0.0;
        for (double x : u) s += x * x * x * x;
        return a + b * s;
      },
      os.str(), b == 0.0);
}

AngularWeight AngularWeight::custom(Fn fn, std::string descriptor) {
  return AngularWeight(std::move(fn), std::move(descriptor), false);
}

AngularWeight AngularWeight::parse(const std::string& descriptor) {
  std::istringstream is(descriptor);
  std::string kind;
  is >> kind;
  if (kind == "const") {
    double c = 1.0;
    if (!(is >> c)) throw InvalidArgument("H descriptor '" + descriptor + "': expected 'const <c>'");
    return constant(c);
  }
  if (kind == "cubic") {
    double a = 0.0;
    double b = 0.0;
    if (!(is >> a >> b))
      throw InvalidArgument("H descriptor '" + descriptor + "': expected 'cubic <a> <b>'");
    return cubic(a, b);
  }
  throw InvalidArgument("H descriptor '" + descriptor + "': unknown form (const | cubic)");
}

// --- TransitionKernel ------------------------------------------------------

namespace {

std::vector<std::array<double, kMaxDim>> sample_directions(int d, int count) {
  std::vector<std::array<double, kMaxDim>> out;
  if (d == 1) {
    out.push_back({1.0, 0.0, 0.0});
    return out;
  }
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    std::array<double, kMaxDim> u{};
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      u[k] = gauss(rng);
      s += u[k] * u[k];
    }
    if (s < 1e-20) continue;
    s = std::sqrt(s);
    for (int k = 0; k < d; ++k) u[k] /= s;
    out.push_back(u);
  }
  return out;
}

double eval_h(const AngularWeight& H, const std::array<double, kMaxDim>& u, int d) {
  return H(std::span<const double>(u.data(), static_cast<std::size_t>(d)));
}

void check_angular_weight(const AngularWeight& H, int d) {
  for (const auto& u : sample_directions(d, 1000)) {
    std::array<double, kMaxDim> minus{};
    for (int k = 0; k < d; ++k) minus[k] = -u[k];
    const double hp = eval_h(H, u, d);
    const double hm = eval_h(H, minus, d);
    if (!(hp > 0.0) || !(hm > 0.0) || !std::isfinite(hp) || !std::isfinite(hm))
      throw InvalidArgument("H not positive");
    if (std::abs(hp - hm) > 1e-12 * std::max(1.0, std::abs(hp)))
      throw InvalidArgument("H not symmetric");
  }
}

// Spherical mean of H.
double mean_h(const AngularWeight& H, int d) {
  if (H.is_constant()) {
    const std::array<double, kMaxDim> e{1.0, 0.0, 0.0};
    return eval_h(H, e, d);
  }
  if (d == 1) return eval_h(H, {1.0, 0.0, 0.0}, 1);
  if (d == 2) {
    constexpr int n = 4096;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * std::numbers::pi * (i + 0.5) / n;
      s += eval_h(H, {std::cos(phi), std::sin(phi), 0.0}, 2);
    }
    return s / n;
  }
  // Fibonacci sphere
  constexpr int n = 20000;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    s += eval_h(H, {r * std::cos(golden * i), r * std::sin(golden * i), z}, 3);
  }
  return s / n;
}

double power_law(const AngularWeight& H, const Site& z, int d, double alpha) {
  const double r = norm(z, d);
  std::array<double, kMaxDim> u{};
  for (int k = 0; k < d; ++k) u[k] = z[k] / r;
  return eval_h(H, u, d) * std::pow(r, -(d + alpha));
}

bool lexicographically_positive(const Site& z, int d) {
  for (int k = 0; k < d; ++k) {
    if (z[k] > 0) return true;
    if (z[k] < 0) return false;
  }
  return false;
}

}  // namespace

TransitionKernel build_kernel(int d, double alpha, const AngularWeight& H, int R) {
  if (d < 1 || d > kMaxDim) throw InvalidArgument("build_kernel: d must be 1, 2 or 3");
  if (!(alpha > 0.0 && alpha < 2.0)) throw InvalidArgument("build_kernel: alpha must lie in (0, 2)");
  if (R < 2) throw InvalidArgument("build_kernel: table radius R must be >= 2");
  check_angular_weight(H, d);

  auto data = std::make_shared<TransitionKernel::Data>();
  data->d = d;
  data->alpha = alpha;
  data->H = H;
  data->R = R;

  const long long r2 = static_cast<long long>(R) * R;
  for (int x = 0; x <= R; ++x) {
    for (int y = (d >= 2 ? -R : 0); y <= (d >= 2 ? R : 0); ++y) {
      for (int z = (d >= 3 ? -R : 0); z <= (d >= 3 ? R : 0); ++z) {
        const Site s{x, y, z};
        const long long n2 = 1LL * x * x + 1LL * y * y + 1LL * z * z;
        if (n2 == 0 || n2 > r2) continue;
        if (!lexicographically_positive(s, d)) continue;
        data->half.push_back(s);
      }
    }
  }

  const std::size_t n = data->half.size();
  data->coords.resize(static_cast<std::size_t>(d) * n);
  data->weights.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) data->coords[k * n + j] = data->half[j][k];
    data->weights[j] = 2.0 * power_law(H, data->half[j], d, alpha);
  }

  // small terms first
  std::vector<double> sorted = data->weights;
  std::sort(sorted.begin(), sorted.end());
  long double sum = 0.0L;
  for (double w : sorted) sum += w;
  data->tabulated_sum = static_cast<double>(sum);

  const double h = mean_h(H, d);
  const double sites = 2.0 * static_cast<double>(n) + 1.0;
  double r_eff = 0.0;
  switch (d) {
    case 1:
      r_eff = R + 0.5;
      break;
    case 2:
      r_eff = std::sqrt(sites / std::numbers::pi);
      break;
    default:
      r_eff = std::cbrt(sites / (4.0 * std::numbers::pi / 3.0));
      break;
  }
  data->tail = ContinuumTail(d, alpha, h, r_eff);
  data->a0 = -(data->tabulated_sum + data->tail.mass());

  const double s = d + alpha;
  double estimate_error = 0.0;
  if (d == 1) {
    // midpoint rule remainder on both half-lines, with a factor 2 of slack
    estimate_error = 4.0 * h * s * std::pow(R + 0.5, -s - 1.0) / 24.0;
  } else {
    // lattice/ball boundary mismatch of one layer
    estimate_error = h * ContinuumTail::sphere_area(d) * std::sqrt(static_cast<double>(d)) *
                     std::pow(static_cast<double>(R), -1.0 - alpha);
  }
  estimate_error += 64.0 * std::numeric_limits<double>::epsilon() * data->tabulated_sum;
  data->tail_sum_error = data->tail.mass() + estimate_error;

  return TransitionKernel(std::move(data));
}

double TransitionKernel::a(const Site& z) const {
  for (int k = 0; k < d(); ++k)
    if (z[k] != 0) return power_law(data_->H, z, d(), alpha());
  return data_->a0;
}

double TransitionKernel::symbol(const Frequency& theta) const {
  return symbol(theta, simd::kernels());
}

double TransitionKernel::symbol(const Frequency& theta, const simd::KernelTable& k) const {
  constexpr double slack = 1e-12;
  for (int i = 0; i < d(); ++i) {
    if (!(std::abs(theta[i]) <= std::numbers::pi + slack))
      throw InvalidArgument("symbol: theta outside [-pi, pi]^d");
  }
  const double lattice =
      k.versine_sum(d(), theta.data(), data_->coords.data(), data_->weights.data(), half_size());
  return -(lattice + data_->tail.versine(norm(theta, d())));
}

double TransitionKernel::tail_slope() const {
  const double lo = 0.25 * table_radius();
  const double hi = table_radius();
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  double count = 0.0;
  for (std::size_t j = 0; j < half_size(); ++j) {
    const double r = norm(data_->half[j], d());
    if (r < lo || r > hi) continue;
    const double x = std::log(r);
    const double y = std::log(half_rate(j));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    count += 1.0;
  }
  if (count < 2.0) throw Error("tail_slope: fewer than two tabulated sites in [R/4, R]");
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

std::string TransitionKernel::id() const {
  std::ostringstream os;
  os.precision(12);
  os << "d=" << d() << ",alpha=" << alpha() << ",R=" << table_radius() << ",H=" << H().descriptor();
  return os.str();
}

SmallThetaBounds symbol_small_theta_bounds(const TransitionKernel& kernel,
                                           std::span<const Frequency> theta_grid) {
  if (theta_grid.empty()) throw InvalidArgument("symbol_small_theta_bounds: empty grid");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& theta : theta_grid) {
    const double r = norm(theta, kernel.d());
    if (r == 0.0) throw InvalidArgument("symbol_small_theta_bounds: theta = 0 in grid");
    const double ratio = std::abs(kernel.symbol(theta)) / std::pow(r, kernel.alpha());
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (!std::isfinite(hi) || !(lo > 0.0) || hi / lo > 1e3)
    throw Error("symbol_small_theta_bounds: |phi|/|theta|^alpha is not bounded away from 0 and infinity");
  return {lo, hi};
}

// --- BranchingLaw ----------------------------------------------------------

BranchingLaw build_branching(const std::map<int, double>& b, int r_max) {
  if (r_max < 1) throw InvalidArgument("build_branching: r_max must be >= 1");
  BranchingLaw law;
  double total = 0.0;
  for (const auto& [n, rate] : b) {
    if (n == 1) throw InvalidArgument("build_branching: b_1 is derived, do not pass it");
    if (n < 0) throw InvalidArgument("build_branching: offspring count must be >= 0");
    if (!(rate >= 0.0) || !std::isfinite(rate))
      throw InvalidArgument("build_branching: b_" + std::to_string(n) + " must be finite and >= 0");
    if (rate > 0.0) law.b_[n] = rate;
    total += rate;
  }
  law.b1_ = -total;
  law.factorial_.assign(static_cast<std::size_t>(r_max), 0.0);
  for (int r = 1; r <= r_max; ++r) {
    double s = (r == 1) ? law.b1_ : 0.0;
    for (const auto& [n, rate] : law.b_) {
      double falling = 1.0;
      for (int k = 0; k < r; ++k) falling *= static_cast<double>(n - k);
      if (n >= r) s += falling * rate;
    }
    law.factorial_[r - 1] = s;
  }
  law.beta_ = law.factorial_[0];
  return law;
}

double BranchingLaw::factorial_moment(int r) const {
  if (r < 1 || r > r_max())
    throw InvalidArgument("BranchingLaw: beta^(" + std::to_string(r) + ") not computed (r_max = " +
                          std::to_string(r_max()) + ")");
  return factorial_[r - 1];
}

std::string BranchingLaw::id() const {
  std::ostringstream os;
  os.precision(12);
  os << "b={";
  bool first = true;
  for (const auto& [n, rate] : b_) {
    os << (first ? "" : ",") << n << ':' << rate;
    first = false;
  }
  os << '}';
  return os.str();
}

// --- g_n -------------------------------------------------------------------

namespace {

constexpr std::array<std::uint64_t, kMaxMomentOrder + 1> factorials() {
  std::array<std::uint64_t, kMaxMomentOrder + 1> f{};
  f[0] = 1;
  for (int i = 1; i <= kMaxMomentOrder; ++i) f[i] = f[i - 1] * static_cast<std::uint64_t>(i);
  return f;
}

constexpr auto kFactorial = factorials();

// Sum over ordered compositions of `remaining` into `parts` positive parts of
// prod m_{i_j} / prod i_j!  (scaled by n! by the caller).
double compositions(int remaining, int parts, std::span<const double> m, std::uint64_t denom,
                    double product, int n) {
  if (parts == 0) {
    if (remaining != 0) return 0.0;
    return static_cast<double>(kFactorial[n] / denom) * product;
  }
  double s = 0.0;
  for (int i = 1; i <= remaining - (parts - 1); ++i)
    s += compositions(remaining - i, parts - 1, m, denom * kFactorial[i], product * m[i - 1], n);
  return s;
}

}  // namespace

double g_n(const BranchingLaw& law, int n, std::span<const double> lower_moments) {
  if (n < 2) throw InvalidArgument("g_n: n must be >= 2");
  if (n > kMaxMomentOrder) throw InvalidArgument("g_n: n > 12 overflows exact multinomials");
  if (lower_moments.size() != static_cast<std::size_t>(n - 1))
    throw InvalidArgument("g_n: expected " + std::to_string(n - 1) + " lower moments, got " +
                          std::to_string(lower_moments.size()));
  double total = 0.0;
  for (int r = 2; r <= n; ++r) {
    const double coeff = law.factorial_moment(r) / static_cast<double>(kFactorial[r]);
    if (coeff == 0.0) continue;
    total += coeff * compositions(n, r, lower_moments, 1, 1.0, n);
  }
  return total;
}

}  // namespace hbrw
