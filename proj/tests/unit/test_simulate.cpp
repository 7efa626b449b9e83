#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "hbrw/error.hpp"
#include "hbrw/moments.hpp"
#include "hbrw/simulate.hpp"

using namespace hbrw;

namespace {

SimulationConfig walk_config(const TransitionKernel& k, BranchingLaw law, std::uint64_t trials) {
  SimulationConfig c{k, std::move(law)};
  c.horizon = 4.0;
  c.snapshot_times = {0.0, 1.0, 2.0, 4.0};
  c.trials = trials;
  c.master_seed = 42;
  return c;
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("stream") {
    Stream a(1, 2, 3), b(1, 2, 3), c(1, 2, 4);
    for (int i = 0; i < 10; ++i) {
      const auto x = a.next();
      CHECK(x == b.next());
      CHECK(x != c.next());
    }
    double sum = 0.0;
    Stream u(9, 0, 0);
    for (int i = 0; i < 100000; ++i) {
      const double v = u.uniform();
      CHECK((v > 0.0 && v <= 1.0));
      sum += v;
    }
    CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("alias sampler frequencies") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 50);
    JumpSampler s(k, 50, TailPolicy::renormalize);
    CHECK(s.support() == 100);
    std::map<int, std::uint64_t> counts;
    Stream rng(7, 0, 0);
    const std::uint64_t draws = 10'000'000;
    for (std::uint64_t i = 0; i < draws; ++i) ++counts[s.sample(rng)[0]];
    double chi2 = 0.0;
    double psum = 0.0;
    for (int z = -50; z <= 50; ++z) {
      if (z == 0) {
        CHECK(counts.count(0) == 0);
        continue;
      }
      const double p = s.probability({z, 0, 0});
      psum += p;
      const double e = p * static_cast<double>(draws);
      const double o = static_cast<double>(counts[z]);
      chi2 += (o - e) * (o - e) / e;
    }
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
    const boost::math::chi_squared dist(99);
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 1e-3);
    CHECK(s.discarded_mass_ratio() > 0.0);
    CHECK(s.discarded_mass_ratio() == doctest::Approx(k.tail_mass() / -k.a0()).epsilon(1e-9));
  }

  TEST_CASE("two-point support") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 10);
    JumpSampler s(k, 1, TailPolicy::renormalize);
    CHECK(s.support() == 2);
    Stream rng(3, 0, 0);
    const int draws = 100000;
    int plus = 0;
    for (int i = 0; i < draws; ++i) {
      const auto z = s.sample(rng);
      REQUIRE(std::abs(z[0]) == 1);
      plus += z[0] == 1;
    }
    // binomial 99.9% interval
    CHECK(std::abs(plus - draws / 2) < 3.3 * std::sqrt(draws * 0.25));
    CHECK_THROWS_AS(JumpSampler(k, 0), InvalidArgument);
    CHECK_THROWS_AS(JumpSampler(k, 11), InvalidArgument);
    CHECK_THROWS_AS(JumpSampler(k, 5, TailPolicy::pareto), InvalidArgument);
  }

  TEST_CASE("unit jumps and the sampled tail") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 4000);
    JumpSampler s(k, 4000, TailPolicy::pareto);
    const double exact = 2.0 * 3.0 / (std::numbers::pi * std::numbers::pi);
    CHECK(2.0 * s.probability({1, 0, 0}) == doctest::Approx(exact).epsilon(1e-6));
    Stream rng(11, 0, 0);
    const int draws = 2'000'000;
    int ones = 0;
    std::vector<double> abs_z;
    abs_z.reserve(draws);
    for (int i = 0; i < draws; ++i) {
      const auto z = s.sample(rng);
      ones += std::abs(z[0]) == 1;
      abs_z.push_back(std::abs(z[0]));
    }
    const double f = static_cast<double>(ones) / draws;
    CHECK(std::abs(f - exact) < 3.3 * std::sqrt(exact * (1 - exact) / draws));

    // P(|z| > m) ~ m^-alpha across the table edge
    std::vector<double> lx, ly;
    for (double m : {10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0}) {
      double above = 0.0;
      for (double v : abs_z) above += v > m;
      lx.push_back(std::log(m));
      ly.push_back(std::log(above / draws));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i] / lx.size();
      my += ly[i] / ly.size();
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    CHECK(sxy / sxx == doctest::Approx(-1.0).epsilon(0.1));
  }

  TEST_CASE("pure walk keeps one particle") {
    const auto k = build_kernel(1, 0.7, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({}, 2), 50);
    for (std::uint64_t i = 0; i < c.trials; ++i) {
      const auto r = run_trial(c, i);
      for (auto v : r.total) CHECK(v == 1);
    }
    c.trials = 1;
    const auto res = estimate(c);
    for (double t : c.snapshot_times) {
      CHECK(res.find(t, "total", 1).estimate == 1.0);
      CHECK(res.find(t, "total", 1).std_error == 0.0);
    }
  }

  TEST_CASE("pure killing at the origin") {
    const auto k = build_kernel(1, 0.7, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({{0, 2.0}}, 2), 2000);
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto r = run_trial(c, i);
      for (std::size_t s = 0; s < r.total.size(); ++s) {
        CHECK(r.total[s] <= 1);
        if (s > 0) CHECK(r.total[s] <= r.total[s - 1]);
      }
    }
    const auto res = estimate(c);
    for (std::size_t s = 1; s < c.snapshot_times.size(); ++s)
      CHECK(res.find(c.snapshot_times[s], "total", 1).estimate < res.find(c.snapshot_times[s - 1], "total", 1).estimate);
  }

  TEST_CASE("standard error shrinks like 1/sqrt(trials)") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({{0, 1.0}, {2, 1.0}}, 2), 500);
    double ratio = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      c.master_seed = 1000 + rep;
      c.trials = 500;
      const double a = estimate(c).find(4.0, "total", 1).std_error;
      c.trials = 1000;
      const double b = estimate(c).find(4.0, "total", 1).std_error;
      ratio += b / a / 20.0;
    }
    CHECK(ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
  }

  TEST_CASE("pure walk matches the transition probability") {
    const auto k = build_kernel(1, 0.8, AngularWeight::constant(), 200);
    auto c = walk_config(k, build_branching({}, 2), 40000);
    c.horizon = 3.0;
    c.snapshot_times = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    c.watch = {{0, 0, 0}, {1, 0, 0}, {-2, 0, 0}, {4, 0, 0}};
    c.start = {1, 0, 0};
    const auto res = estimate(c);
    MomentEngine eng(k, build_branching({}, 2), TruncatedLattice(1, 200), c.snapshot_times);
    std::mt19937 pick(5);
    for (int i = 0; i < 10; ++i) {
      const double t = c.snapshot_times[pick() % c.snapshot_times.size()];
      const Site y = c.watch[pick() % c.watch.size()];
      const auto p = eng.transition_probability(c.start, y);
      const std::size_t it = static_cast<std::size_t>(std::find(c.snapshot_times.begin(), c.snapshot_times.end(), t) -
                                                      c.snapshot_times.begin());
      // p(t, x, y): walker started at x found at y
      const auto& e = res.find(t, "local", 1, y);
      CAPTURE(t);
      CAPTURE(y[0]);
      CHECK(std::abs(e.estimate - p.values[it]) <= 3.0 * e.std_error);
    }
  }

  TEST_CASE("deterministic across thread counts") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 200);
    auto c = walk_config(k, build_branching({{0, 1.0}, {2, 1.0}}, 2), 3000);
    c.watch = {{0, 0, 0}};
    c.n_max = 3;
    c.threads = 1;
    const auto a = estimate(c);
    c.threads = 4;
    const auto b = estimate(c);
    c.threads = 16;
    const auto d = estimate(c);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].estimate == b.rows[i].estimate);
      CHECK(a.rows[i].std_error == b.rows[i].std_error);
      CHECK(a.rows[i].estimate == d.rows[i].estimate);
      CHECK(a.rows[i].std_error == d.rows[i].std_error);
    }
    c.master_seed = 43;
    const auto e = estimate(c);
    CHECK(e.rows.back().estimate != a.rows.back().estimate);
  }

  TEST_CASE("moment estimates are nondecreasing in n") {
    const auto k = build_kernel(1, 1.0, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({{0, 1.0}, {2, 1.0}}, 2), 2000);
    c.watch = {{0, 0, 0}};
    c.n_max = 4;
    const auto res = estimate(c);
    for (double t : c.snapshot_times)
      for (int n = 2; n <= 4; ++n) {
        CHECK(res.find(t, "total", n).estimate >= res.find(t, "total", n - 1).estimate);
        CHECK(res.find(t, "local", n, {}).estimate >= res.find(t, "local", n - 1, {}).estimate);
      }
  }

  TEST_CASE("population cap") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({{2, 20.0}}, 2), 200);
    c.population_cap = 50;
    const auto capped = estimate(c);
    CHECK(capped.capped_trials > 0);
    CHECK(capped.used_trials == capped.trials - capped.capped_trials);
    c.cap_policy = CapPolicy::clamp;
    CHECK(estimate(c).used_trials == c.trials);

    auto sub = walk_config(k, build_branching({{0, 1.0}, {2, 0.5}}, 2), 2000);
    CHECK(estimate(sub).capped_trials == 0);
  }

  TEST_CASE("config validation") {
    const auto k = build_kernel(1, 0.5, AngularWeight::constant(), 100);
    auto c = walk_config(k, build_branching({}, 2), 10);
    c.snapshot_times = {1.0, 0.5};
    CHECK_THROWS_AS(estimate(c), InvalidArgument);
    c = walk_config(k, build_branching({}, 2), 0);
    CHECK_THROWS_AS(estimate(c), InvalidArgument);
    c = walk_config(k, build_branching({}, 2), 10);
    c.snapshot_times = {5.0};
    CHECK_THROWS_AS(estimate(c), InvalidArgument);
    c = walk_config(k, build_branching({}, 2), 10);
    CHECK_THROWS_AS(run_trial(c, 10), InvalidArgument);
  }
}
