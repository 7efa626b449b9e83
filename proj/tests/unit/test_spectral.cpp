#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "hbrw/error.hpp"
#include "hbrw/lattice.hpp"
#include "hbrw/spectral.hpp"

using namespace hbrw;

namespace {

constexpr double kPi = std::numbers::pi;

// (lambda - A_box)^-1 e_y by conjugate gradients, i.e. the Laplace transform
// int_0^inf e^{-lambda t} p_box(t, ., y) dt of the absorbed walk.
std::vector<double> box_resolvent(const TransitionKernel& k, const TruncatedLattice& box, double lambda, const Site& y) {
  BoxOperator op(k, box, BoxOperator::Method::direct);
  const std::size_t n = box.size();
  std::vector<double> x(n, 0.0), r(n, 0.0), p(n), q(n);
  r[box.index(y)] = 1.0;
  p = r;
  double rr = 1.0;
  for (int it = 0; it < 5000 && rr > 1e-26; ++it) {
    op.apply(p, q);
    double pq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = lambda * p[i] - q[i];
      pq += p[i] * q[i];
    }
    const double a = rr / pq;
    double rn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += a * p[i];
      r[i] -= a * q[i];
      rn += r[i] * r[i];
    }
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + rn / rr * p[i];
    rr = rn;
  }
  return x;
}

}  // namespace

TEST_SUITE("spectral") {
  TEST_CASE("large lambda") {
    const auto k = build_kernel(1, 0.7, AngularWeight::constant(), 200);
    const auto g = green(k, 1e6, {}, {});
    CHECK(g.value == doctest::Approx(1e-6).epsilon(0.01));
    CHECK(g.quad_error >= 0.0);
    const std::vector<double> lambdas{1e6};
    CHECK(i0_profile(k, lambdas)[0] < 2e-6);
  }

  TEST_CASE("divergent at lambda = 0 when d/alpha <= 1") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 200);
    CHECK_THROWS_AS(green(k, 0.0, {}, {}), DivergentIntegral);
    CHECK_THROWS_AS(green(k, -1.0, {}, {}), InvalidArgument);
    CHECK(beta_c(k) == 0.0);
  }

  TEST_CASE("lambda = 0 against Monte Carlo integration") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 100);
    const auto g = green(k, 0.0, {}, {});
    // (1/pi) int_0^pi dtheta / -phi with theta = pi v^2 removes the singularity
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& isa = simd::kernels();
    const int samples = 10'000'000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double v = u(rng);
      const double f = 2.0 * v / -k.symbol({kPi * v * v, 0.0, 0.0}, isa);
      sum += f;
      sum2 += f * f;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
    CHECK(se < 5e-4 * mean);
    CHECK(g.value == doctest::Approx(mean).epsilon(1e-3));
  }

  TEST_CASE("symmetry and translation") {
    const auto k = build_kernel(2, 1.3, AngularWeight::cubic(1.0, 0.5), 20);
    const auto a = green(k, 0.2, {2, -1, 0}, {0, 1, 0});
    const auto b = green(k, 0.2, {0, 1, 0}, {2, -1, 0});
    const auto c = green(k, 0.2, {2, -2, 0}, {});
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    CHECK(a.value == doctest::Approx(c.value).epsilon(1e-12));
    CHECK(a.value > 0.0);
  }

  TEST_CASE("i0 profile is increasing and converges") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const std::vector<double> lambdas{1.0, 0.5, 0.1, 1e-4, 1e-5};
    const auto v = i0_profile(k, lambdas);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] > v[i - 1]);
    CHECK(std::abs(v[4] - v[3]) / v[4] < 0.01);
    const double g0 = 1.0 / beta_c(k);
    CHECK(std::abs(g0 - v[4]) / g0 < 0.01);
    CHECK(v[4] < g0);
    const std::vector<double> bad{0.1, 0.5};
    CHECK_THROWS_AS(i0_profile(k, bad), InvalidArgument);
  }

  TEST_CASE("Laplace transform of the truncated walk") {
    const auto k = build_kernel(1, 0.8, AngularWeight::constant(), 400);
    TruncatedLattice box(1, 200);
    for (double lambda : {0.05, 0.3, 2.0}) {
      const auto r = box_resolvent(k, box, lambda, {});
      for (int x : {0, 1, 5, 20}) {
        CAPTURE(lambda);
        CAPTURE(x);
        const auto g = green(k, lambda, {x, 0, 0}, {});
        CHECK(r[box.index({x, 0, 0})] == doctest::Approx(g.value).epsilon(0.01));
      }
    }
  }

  TEST_CASE("beta_c bands") {
    CHECK(beta_c(build_kernel(1, 1.2, AngularWeight::constant(), 100)) == 0.0);
    CHECK(beta_c(build_kernel(1, 1.0, AngularWeight::constant(), 100)) == 0.0);
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const double bc = beta_c(k);
    CHECK(bc > 0.0);
    CHECK(bc == doctest::Approx(1.0 / green(k, 0.0, {}, {}).value).epsilon(1e-12));
  }

  TEST_CASE("beta_c in d = 3 against the time integral of the return probability") {
    const auto k = build_kernel(3, 1.0, AngularWeight::constant(), 8);
    const double g0 = 1.0 / beta_c(k);
    // int_0^inf p_box(t, 0, 0) dt; the box misses far jumps, so it lies below
    const auto r = box_resolvent(k, TruncatedLattice(3, 8), 0.0, {});
    const double oracle = r[TruncatedLattice(3, 8).origin()];
    CHECK(oracle < g0);
    CHECK(oracle == doctest::Approx(g0).epsilon(0.002));
  }

  TEST_CASE("l2 admissibility of lambda = 0") {
    CHECK(l2_admissible(build_kernel(1, 0.4, AngularWeight::constant(), 500)));
    CHECK_FALSE(l2_admissible(build_kernel(1, 0.5, AngularWeight::constant(), 500)));
    CHECK_FALSE(l2_admissible(build_kernel(1, 1.0, AngularWeight::constant(), 500)));
    CHECK_FALSE(l2_admissible(build_kernel(2, 1.0, AngularWeight::constant(), 20)));
    CHECK(l2_admissible(build_kernel(2, 0.9, AngularWeight::constant(), 20)));
    CHECK(l2_admissible(build_kernel(3, 1.0, AngularWeight::constant(), 6)));
  }

  TEST_CASE("Parseval norm against the lattice sum") {
    const auto k = build_kernel(1, 0.6, AngularWeight::constant(), 1000);
    GreenSolver solver(k, 600.0, 0.5);
    const double lambda = 0.5;
    std::vector<Site> xs;
    for (int x = 0; x <= 600; ++x) xs.push_back({x, 0, 0});
    const auto g = solver.green(lambda, xs);
    double sum = g[0].value * g[0].value;
    for (std::size_t i = 1; i < g.size(); ++i) sum += 2.0 * g[i].value * g[i].value;
    // G ~ c x^{-1-alpha}; add the tail beyond 600
    const double last = g.back().value;
    sum += 2.0 * last * last * 600.0 / (1.0 + 2.0 * 0.6);
    const auto l2 = solver.green_l2_squared(lambda);
    CHECK(l2.value == doctest::Approx(sum).epsilon(1e-5));
  }

  TEST_CASE("eigenvalue examples") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const double beta = 1.0 / green(k, 1.0, {}, {}).value;
    const auto l = solve_eigenvalue(k, beta);
    REQUIRE(l.has_value());
    CHECK(std::abs(*l - 1.0) <= 1e-8);

    CHECK_FALSE(solve_eigenvalue(build_kernel(1, 1.2, AngularWeight::constant(), 200), 0.0).has_value());

    const auto k4 = build_kernel(1, 0.4, AngularWeight::constant(), 2000);
    const auto l0 = solve_eigenvalue(k4, beta_c(k4));
    REQUIRE(l0.has_value());
    CHECK(*l0 == 0.0);
    // at beta_c with d/alpha <= 2 there is none
    CHECK_FALSE(solve_eigenvalue(k, beta_c(k)).has_value());
    CHECK_FALSE(solve_eigenvalue(k, 0.5 * beta_c(k)).has_value());
    CHECK_THROWS_AS(solve_eigenvalue(k, -1.0), InvalidArgument);
  }

  TEST_CASE("eigenvalue is unique across methods and brackets") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const double beta = 2.0 * beta_c(k);
    EigenOptions a;
    EigenOptions b;
    b.method = RootMethod::bisection;
    EigenOptions c;
    c.bracket = std::make_pair(1e-6, 50.0);
    EigenOptions e;
    e.method = RootMethod::bisection;
    e.bracket = std::make_pair(1e-3, 1e3);
    const auto la = solve_eigenvalue(k, beta, a);
    const auto lb = solve_eigenvalue(k, beta, b);
    const auto lc = solve_eigenvalue(k, beta, c);
    const auto le = solve_eigenvalue(k, beta, e);
    REQUIRE(la.has_value());
    REQUIRE(lb.has_value());
    REQUIRE(lc.has_value());
    REQUIRE(le.has_value());
    CHECK(*la > 0.0);
    CHECK(std::abs(*la - *lb) <= 1e-8);
    CHECK(std::abs(*la - *lc) <= 1e-8);
    CHECK(std::abs(*la - *le) <= 1e-8);
    const auto g = green(k, *la, {}, {});
    CHECK(std::abs(beta * g.value - 1.0) <= 1e-10 + beta * g.quad_error);

    EigenOptions wrong;
    wrong.bracket = std::make_pair(10.0, 20.0);
    CHECK_THROWS_AS(solve_eigenvalue(k, beta, wrong), BracketNotFound);
  }

  TEST_CASE("eigenfunction residual on the box") {
    const int R_box = 200;
    const int reach = 1500;
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const double beta = 2.0 * beta_c(k);
    const double l0 = *solve_eigenvalue(k, beta);
    const auto f = eigenfunction(k, beta, l0, reach);
    CHECK(f.at({}) == 1.0);
    for (int x = 1; x <= reach; ++x) CHECK(f.at({x, 0, 0}) == doctest::Approx(f.at({-x, 0, 0})).epsilon(1e-12));

    // (A + beta delta_0) f - lambda_0 f at the box points, jumps cut at |z| <= reach - R_box;
    // the l2 norms are taken over the box
    double res2 = 0.0, norm2 = 0.0, boxed2 = 0.0;
    for (int x = -R_box; x <= R_box; ++x) {
      double in = (k.a0() + (x == 0 ? beta : 0.0)) * f.at({x, 0, 0});
      double out = 0.0;
      for (int y = -reach; y <= reach; ++y) {
        if (y == x) continue;
        const double t = k.a({y - x, 0, 0}) * f.at({y, 0, 0});
        (std::abs(y) <= R_box ? in : out) += t;
      }
      const double r = in + out - l0 * f.at({x, 0, 0});
      res2 += r * r;
      boxed2 += (r - out) * (r - out);
      norm2 += f.at({x, 0, 0}) * f.at({x, 0, 0});
    }
    CHECK(std::sqrt(res2 / norm2) <= 1e-3);
    // f is not an eigenvector of the absorbed box operator: the mass of f
    // outside the box dominates that residual
    CHECK(std::sqrt(boxed2 / norm2) > 100.0 * std::sqrt(res2 / norm2));

    CHECK_THROWS_AS(eigenfunction(k, beta_c(k), 0.0, 10), InvalidArgument);
    const auto k4 = build_kernel(1, 0.4, AngularWeight::constant(), 2000);
    const auto f4 = eigenfunction(k4, beta_c(k4), 0.0, 10);
    CHECK(f4.at({}) == 1.0);
    CHECK(f4.at({10, 0, 0}) < f4.at({1, 0, 0}));
  }

  TEST_CASE("classify") {
    const auto law_zero = build_branching({{0, 0.5}, {2, 0.5}}, 2);
    const auto k5 = build_kernel(1, 0.5, AngularWeight::constant(), 2000);
    const auto r1 = classify(k5, law_zero);
    CHECK(r1.beta == 0.0);
    CHECK(r1.band == Band::one_to_two);
    CHECK(r1.classification == Regime::subcritical);
    CHECK_FALSE(r1.eigenvalue.has_value());

    const auto k12 = build_kernel(1, 1.2, AngularWeight::constant(), 200);
    const auto r2 = classify(k12, law_zero);
    CHECK(r2.band == Band::half_to_one);
    CHECK(r2.beta_c == 0.0);
    CHECK(r2.classification == Regime::critical);

    const auto k4 = build_kernel(1, 0.4, AngularWeight::constant(), 2000);
    const double bc = beta_c(k4);
    // birth rate b2 = 2 beta_c: beta = b2 - b0 with b0 = 0
    const auto law = build_branching({{2, 2.0 * bc}}, 2);
    const auto r3 = classify(k4, law);
    CHECK(r3.band == Band::above_two);
    CHECK(r3.classification == Regime::supercritical);
    REQUIRE(r3.eigenvalue.has_value());
    CHECK(*r3.eigenvalue > 0.0);
    CHECK(r3.residual <= 1e-10);
    REQUIRE(r3.has_c_const());
    const Site x{2, 0, 0}, y{-3, 0, 0};
    CHECK(r3.c_const(x, y) == doctest::Approx(r3.c_const(y, x)).epsilon(1e-12));
    CHECK(r3.c_const(x, y) > 0.0);

    const auto crit = classify(k4, build_branching({{2, bc}}, 2));
    CHECK(crit.classification == Regime::critical);
    REQUIRE(crit.eigenvalue.has_value());
    CHECK(*crit.eigenvalue == 0.0);
  }
}
