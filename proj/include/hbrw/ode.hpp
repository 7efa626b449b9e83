#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hbrw {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0: automatic
  double min_step = 1e-14;    // relative to the time scale
  std::size_t max_steps = 50'000'000;
};

struct OdeStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

// Dormand-Prince 5(4) with 5th-order dense output.
//
// rhs(t, y, dydt) evaluates the system; observe(i, y) is called with the
// interpolated state at every output time out_times[i] (ascending, >= t0).
class DormandPrince {
 public:
  using Rhs = std::function<void(double, std::span<const double>, std::span<double>)>;
  using Observer = std::function<void(std::size_t, std::span<const double>)>;

  explicit DormandPrince(OdeOptions options = {}) : options_(options) {}

  OdeStats integrate(const Rhs& rhs, std::span<const double> y0, double t0,
                     std::span<const double> out_times, const Observer& observe) const;

 private:
  OdeOptions options_;
};

}  // namespace hbrw
