#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/special_functions/zeta.hpp>

#include "doctest.h"
#include "hbrw/error.hpp"
#include "hbrw/kernel.hpp"

using namespace hbrw;

namespace {

constexpr double kPi = std::numbers::pi;

// sum_{k>=0} (-1)^k (2k+1)^-s, averaged partial sums
double dirichlet_beta(double s) {
  double sum = 0.0;
  double prev = 0.0;
  const int terms = 2000000;
  for (int k = 0; k < terms; ++k) {
    prev = sum;
    sum += ((k % 2) ? -1.0 : 1.0) * std::pow(2.0 * k + 1.0, -s);
  }
  return 0.5 * (sum + prev);
}

// Brute force over all r-tuples in [1, n]^r.
double g_n_tuples(const BranchingLaw& law, int n, const std::vector<double>& m) {
  double total = 0.0;
  for (int r = 2; r <= n; ++r) {
    std::vector<int> idx(r, 1);
    double inner = 0.0;
    while (true) {
      int sum = 0;
      for (int v : idx) sum += v;
      if (sum == n) {
        double coeff = std::tgamma(n + 1.0);
        double prod = 1.0;
        for (int v : idx) {
          coeff /= std::tgamma(v + 1.0);
          prod *= m[v - 1];
        }
        inner += coeff * prod;
      }
      int k = 0;
      while (k < r && ++idx[k] > n) idx[k++] = 1;
      if (k == r) break;
    }
    total += law.factorial_moment(r) / std::tgamma(r + 1.0) * inner;
  }
  return total;
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("power law entries are exact") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100000);
    CHECK(k.a({1, 0, 0}) == 1.0);
    CHECK(k.a({2, 0, 0}) == 0.25);
    CHECK(k.a({-2, 0, 0}) == 0.25);
    CHECK(k.a({0, 0, 0}) == k.a0());
  }

  TEST_CASE("diagonal matches the zeta sum") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100000);
    CHECK(std::abs(k.a0() + kPi * kPi / 3.0) < 1e-11);
    for (double alpha : {0.5, 1.5}) {
      const auto kk = build_kernel(1, alpha, AngularWeight::constant(), 20000);
      const double exact = 2.0 * boost::math::zeta(1.0 + alpha);
      CHECK(std::abs(kk.a0() + exact) <= kk.tail_sum_error() - kk.tail_mass());
    }
  }

  TEST_CASE("two-dimensional diagonal matches the Dirichlet series") {
    // sum_{z in Z^2 \ 0} |z|^-3 = 4 zeta(3/2) beta(3/2)
    const auto k = build_kernel(2, 1.0, AngularWeight::constant(), 300);
    const double exact = 4.0 * boost::math::zeta(1.5) * dirichlet_beta(1.5);
    CHECK(std::abs(k.a0() + exact) <= k.tail_sum_error() - k.tail_mass());
    CHECK(std::abs(k.a0() + k.tabulated_sum()) <= k.tail_sum_error());
  }

  TEST_CASE("kernel invariants") {
    const std::vector<std::pair<int, double>> cases{{1, 0.5}, {1, 1.0}, {1, 1.5}, {2, 1.0}, {3, 1.0}};
    for (auto [d, alpha] : cases) {
      const int R = d == 1 ? 20000 : (d == 2 ? 200 : 30);
      const auto k = build_kernel(d, alpha, AngularWeight::constant(), R);
      CHECK(k.a0() < 0.0);
      CHECK(std::abs(k.a0() + k.tabulated_sum() + k.tail_mass()) <= 1e-10 * std::abs(k.a0()));
      CHECK(std::abs(k.a0() + k.tabulated_sum()) <= k.tail_sum_error());
      CHECK(std::abs(k.tail_slope() + (d + alpha)) < 1e-6);
      for (const auto& z : k.half_sites()) {
        Site m{-z[0], -z[1], -z[2]};
        CHECK_MESSAGE(k.a(z) == k.a(m), "symmetry");
        if (k.a(z) != k.a(m)) break;
      }
    }
  }

  TEST_CASE("rejects bad parameters") {
    CHECK_THROWS_AS(build_kernel(1, 2.5, AngularWeight::constant(), 10), InvalidArgument);
    CHECK_THROWS_AS(build_kernel(1, 0.0, AngularWeight::constant(), 10), InvalidArgument);
    CHECK_THROWS_AS(build_kernel(1, 1.0, AngularWeight::constant(), 1), InvalidArgument);
    CHECK_THROWS_WITH(build_kernel(2, 0.5, AngularWeight::constant(-1.0), 3), "H not positive");
    const auto skew = AngularWeight::custom([](std::span<const double> u) { return 2.0 + u[0]; });
    CHECK_THROWS_WITH(build_kernel(2, 0.5, skew, 3), "H not symmetric");
  }

  TEST_CASE("symbol closed form for alpha = 1") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100000);
    CHECK(k.symbol({0.0, 0.0, 0.0}) == 0.0);
    CHECK(k.symbol({kPi, 0, 0}) == doctest::Approx(-kPi * kPi / 2.0).epsilon(1e-8));
    for (int i = -50; i <= 50; ++i) {
      const double t = kPi * i / 50.0;
      const double exact = -kPi * std::abs(t) + 0.5 * t * t;
      CHECK(std::abs(k.symbol({t, 0, 0}) - exact) <= 1e-8);
    }
    // far below 1/R the continuum tail carries the whole symbol
    for (double t : {1e-6, 1e-8, 1e-10}) {
      CHECK(k.symbol({t, 0, 0}) == doctest::Approx(-kPi * t + 0.5 * t * t).epsilon(1e-6));
    }
  }

  TEST_CASE("symbol is nonpositive and even") {
    for (int d = 1; d <= 3; ++d) {
      const auto k = build_kernel(d, 0.7, AngularWeight::cubic(1.0, 0.5), d == 1 ? 1000 : 12);
      std::mt19937_64 rng(d);
      std::uniform_real_distribution<double> u(-kPi, kPi);
      for (int i = 0; i < 10000; ++i) {
        Frequency t{u(rng), d > 1 ? u(rng) : 0.0, d > 2 ? u(rng) : 0.0};
        Frequency m{-t[0], -t[1], -t[2]};
        const double p = k.symbol(t);
        CHECK(p <= 1e-12);
        CHECK(std::abs(p - k.symbol(m)) <= 1e-12 * std::max(1.0, std::abs(p)));
        if (p > 1e-12) break;
      }
    }
  }

  TEST_CASE("symbol uses simd and scalar kernels consistently") {
    const auto k = build_kernel(2, 1.2, AngularWeight::constant(), 60);
    for (double t : {0.001, 0.3, 2.9}) {
      const Frequency th{t, -0.5 * t, 0.0};
      const double a = k.symbol(th, simd::kernels(simd::Isa::scalar));
      const double b = k.symbol(th);
      CHECK(a == doctest::Approx(b).epsilon(1e-13));
    }
    CHECK_THROWS_AS(k.symbol({4.0, 0.0, 0.0}), InvalidArgument);
  }

  TEST_CASE("small-theta bounds") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100000);
    std::vector<Frequency> grid;
    for (int j = 3; j <= 12; ++j) grid.push_back({std::ldexp(1.0, -j), 0, 0});
    const auto b = symbol_small_theta_bounds(k, grid);
    // |phi|/theta = pi - theta/2 exactly, so the coarsest point sits at pi - 1/16
    CHECK(b.c_low == doctest::Approx(kPi - 1.0 / 16.0).epsilon(1e-9));
    CHECK(b.c_high <= kPi);
    CHECK(b.c_high >= kPi - 0.05);
    for (int d = 2; d <= 3; ++d) {
      const auto kk = build_kernel(d, 0.8, AngularWeight::constant(), 10);
      std::vector<Frequency> g;
      for (int j = 1; j <= 20; ++j) g.push_back({std::ldexp(0.6, -j), std::ldexp(0.3, -j), 0.0});
      const auto bb = symbol_small_theta_bounds(kk, g);
      CHECK(bb.c_low > 0.0);
      CHECK(bb.c_high / bb.c_low < 3.0);
    }
  }

  TEST_CASE("branching law") {
    const auto a = build_branching({{2, 1.0}}, 4);
    CHECK(a.b1() == -1.0);
    CHECK(a.beta() == 1.0);
    CHECK(a.factorial_moment(2) == 2.0);
    const auto c = build_branching({{0, 1.0}, {2, 1.0}}, 4);
    CHECK(c.b1() == -2.0);
    CHECK(c.beta() == 0.0);
    CHECK(c.factorial_moment(2) == 2.0);
    CHECK(c.factorial_moment(3) == 0.0);
    const auto e = build_branching({}, 3);
    CHECK(e.beta() == 0.0);
    for (int r = 1; r <= 3; ++r) CHECK(e.factorial_moment(r) == 0.0);
    CHECK_THROWS_AS(build_branching({{1, 1.0}}, 2), InvalidArgument);
    CHECK_THROWS_AS(build_branching({{0, -1.0}}, 2), InvalidArgument);
  }

  TEST_CASE("g_n examples") {
    const auto law2 = build_branching({{2, 1.0}}, 2);
    const std::vector<double> m1{3.0};
    CHECK(g_n(law2, 2, m1) == 18.0);

    // beta^(2) = beta^(3) = 1 from b_3 = 1/6 alone
    const auto law3 = build_branching({{3, 1.0 / 6.0}}, 5);
    CHECK(law3.factorial_moment(2) == doctest::Approx(1.0));
    CHECK(law3.factorial_moment(3) == doctest::Approx(1.0));
    const std::vector<double> m12{1.0, 2.0};
    CHECK(g_n(law3, 3, m12) == doctest::Approx(7.0).epsilon(1e-14));

    const std::vector<double> zeros(4, 0.0);
    CHECK(g_n(law3, 5, zeros) == 0.0);
    CHECK_THROWS_AS(g_n(law2, 3, m1), InvalidArgument);
    CHECK_THROWS_AS(g_n(law2, 13, std::vector<double>(12, 1.0)), InvalidArgument);
  }

  TEST_CASE("g_n agrees with tuple enumeration") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
      const auto law = build_branching({{0, u(rng)}, {2, u(rng)}, {3, u(rng)}, {5, u(rng)}}, 5);
      const int n = 2 + trial % 4;
      std::vector<double> m(n - 1);
      for (auto& x : m) x = u(rng);
      const double a = g_n(law, n, m);
      const double b = g_n_tuples(law, n, m);
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
    }
  }
}
