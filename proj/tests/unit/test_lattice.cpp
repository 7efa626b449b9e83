#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "hbrw/error.hpp"
#include "hbrw/lattice.hpp"
#include "hbrw/ode.hpp"

using namespace hbrw;

namespace {

// y = A p by looping over all pairs of box sites.
std::vector<double> dense_apply(const TransitionKernel& k, const TruncatedLattice& box, const std::vector<double>& p) {
  std::vector<double> y(box.size(), 0.0);
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Site x = box.site(i);
    double s = k.a0() * p[i];
    for (std::size_t j = 0; j < box.size(); ++j) {
      if (i == j) continue;
      const Site w = box.site(j);
      const Site z{w[0] - x[0], w[1] - x[1], w[2] - x[2]};
      if (norm(z, k.d()) <= k.table_radius()) s += k.a(z) * p[j];
    }
    y[i] = s;
  }
  return y;
}

}  // namespace

TEST_SUITE("lattice") {
  TEST_CASE("index round trip") {
    for (int d = 1; d <= 3; ++d) {
      TruncatedLattice box(d, 3);
      CHECK(box.size() == static_cast<std::size_t>(std::pow(7, d)));
      for (std::size_t i = 0; i < box.size(); ++i) CHECK(box.index(box.site(i)) == i);
      CHECK(box.site(box.origin()) == Site{});
    }
    TruncatedLattice box(2, 2);
    CHECK_FALSE(box.contains({3, 0, 0}));
    CHECK_FALSE(box.contains({0, 0, 1}));
    CHECK_THROWS_AS(box.index({3, 0, 0}), InvalidArgument);
    CHECK_THROWS_AS(TruncatedLattice(4, 1), InvalidArgument);
    CHECK_THROWS_AS(TruncatedLattice(1, -1), InvalidArgument);
  }

  TEST_CASE("direct and fft backends agree with a dense operator") {
    struct Case {
      int d;
      double alpha;
      int kernel_R;
      int box_R;
    };
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& c : {Case{1, 0.5, 40, 12}, Case{1, 1.5, 8, 12}, Case{2, 1.0, 6, 5}, Case{3, 1.2, 3, 2}}) {
      CAPTURE(c.d);
      CAPTURE(c.alpha);
      const auto k = build_kernel(c.d, c.alpha, AngularWeight::constant(), c.kernel_R);
      TruncatedLattice box(c.d, c.box_R);
      std::vector<double> p(box.size());
      for (auto& v : p) v = u(rng);
      const auto ref = dense_apply(k, box, p);
      double scale = 0.0;
      for (double v : ref) scale = std::max(scale, std::abs(v));
      for (auto method : {BoxOperator::Method::direct, BoxOperator::Method::fft}) {
        BoxOperator op(k, box, method);
        CHECK(op.method() == method);
        std::vector<double> y(box.size());
        op.apply(p, y);
        double worst = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
        CHECK(worst <= 1e-12 * std::max(scale, std::abs(k.a0())));
      }
    }
  }

  TEST_CASE("exit rates") {
    const auto k = build_kernel(1, 0.8, AngularWeight::constant(), 30);
    TruncatedLattice box(1, 5);
    BoxOperator op(k, box);
    const auto exit = op.exit_rates();
    for (double r : exit) CHECK(r >= 0.0);
    // at the origin: everything beyond distance 5 leaves
    double inside = 0.0;
    for (int z = 1; z <= 5; ++z) inside += 2.0 * k.a({z, 0, 0});
    CHECK(exit[box.origin()] == doctest::Approx(-k.a0() - inside).epsilon(1e-12));
    CHECK(exit[box.index({5, 0, 0})] > exit[box.origin()]);

    // a single site loses everything
    TruncatedLattice one(1, 0);
    BoxOperator op1(k, one);
    CHECK(op1.exit_rates()[0] == doctest::Approx(-k.a0()).epsilon(1e-14));
  }

  TEST_CASE("size mismatch") {
    const auto k = build_kernel(1, 0.8, AngularWeight::constant(), 4);
    BoxOperator op(k, TruncatedLattice(1, 2));
    std::vector<double> p(4), y(5);
    CHECK_THROWS_AS(op.apply(p, y), InvalidArgument);
    CHECK_THROWS_AS(BoxOperator(k, TruncatedLattice(2, 2)), InvalidArgument);
  }
}

TEST_SUITE("ode") {
  TEST_CASE("exponential decay with dense output") {
    DormandPrince solver({.rtol = 1e-10, .atol = 1e-14});
    std::vector<double> times{0.0, 0.1, 0.37, 1.0, 2.5, 5.0};
    std::vector<double> got(times.size());
    const auto stats = solver.integrate([](double, std::span<const double> y, std::span<double> dy) { dy[0] = -1.3 * y[0]; },
                                        std::vector<double>{2.0}, 0.0, times,
                                        [&](std::size_t i, std::span<const double> y) { got[i] = y[0]; });
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(got[i] == doctest::Approx(2.0 * std::exp(-1.3 * times[i])).epsilon(1e-8));
    CHECK(stats.steps > 0);
  }

  TEST_CASE("harmonic oscillator") {
    DormandPrince solver({.rtol = 1e-10, .atol = 1e-12});
    const std::vector<double> times{0.0, 1.0, 10.0, 20.0};
    std::vector<std::array<double, 2>> got(times.size());
    solver.integrate(
        [](double, std::span<const double> y, std::span<double> dy) {
          dy[0] = y[1];
          dy[1] = -y[0];
        },
        std::vector<double>{1.0, 0.0}, 0.0, times,
        [&](std::size_t i, std::span<const double> y) { got[i] = {y[0], y[1]}; });
    for (std::size_t i = 0; i < times.size(); ++i) {
      CHECK(got[i][0] == doctest::Approx(std::cos(times[i])).epsilon(1e-7).scale(1.0));
      CHECK(got[i][1] == doctest::Approx(-std::sin(times[i])).epsilon(1e-7).scale(1.0));
    }
  }

  TEST_CASE("errors") {
    DormandPrince solver;
    const auto rhs = [](double, std::span<const double> y, std::span<double> dy) { dy[0] = y[0]; };
    const std::vector<double> bad{1.0, 0.5};
    CHECK_THROWS_AS(solver.integrate(rhs, std::vector<double>{1.0}, 0.0, bad, [](std::size_t, std::span<const double>) {}),
                    InvalidArgument);
    DormandPrince tiny({.max_steps = 3});
    const std::vector<double> far{100.0};
    CHECK_THROWS_AS(tiny.integrate(rhs, std::vector<double>{1.0}, 0.0, far, [](std::size_t, std::span<const double>) {}),
                    StepSizeUnderflow);
  }
}
