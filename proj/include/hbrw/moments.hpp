#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbrw/kernel.hpp"
#include "hbrw/lattice.hpp"
#include "hbrw/ode.hpp"

namespace hbrw {

enum class Quantity { local, total };
enum class Provenance { ode, integral_recursion, monte_carlo };

std::string quantity_name(Quantity q);
std::string provenance_name(Provenance p);

// m_n(t, x, y) (local) or m_n(t, x) (total) on a time grid.
struct MomentSeries {
  Quantity quantity = Quantity::local;
  int n = 1;
  std::vector<double> grid;
  std::vector<double> values;
  Provenance provenance = Provenance::ode;
  int truncation_radius = 0;
  std::string kernel_id;
  std::string law_id;
  Site x{};
  Site y{};

  // Expected mass absorbed by the box boundary (empty when not tracked).
  std::vector<double> leak;
  // value(2 R_L) - value(R_L) (empty unless requested).
  std::vector<double> trunc_diff;
  // Numerical error estimate of the values (convolutions), empty for ODE output.
  std::vector<double> error;
  // Total mean only: the in-box ODE with m(0) = 1, against which `values`
  // (the integral identity, unaffected by absorption) is cross-checked.
  std::vector<double> cross_check;
};

struct MomentOptions {
  OdeOptions ode{};
  BoxOperator::Method method = BoxOperator::Method::automatic;
  // BoxTooSmall when the absorbed fraction of mass exceeds this.
  double leak_budget = 1.0;
  // GridTooCoarse when a convolution error estimate exceeds this fraction of the value.
  double conv_rel_tol = 1e-2;
  bool truncation_diff = false;
};

struct Convolution {
  std::vector<double> values;
  std::vector<double> error;
};

// int_0^t f(t - s) g(s) ds on a uniform grid starting at 0 (trapezoid rule,
// error from comparison with the rule on every other point).
Convolution convolve(std::span<const double> f, std::span<const double> g, std::span<const double> grid);

// Uniform grid of `points` times on [0, t_max].
std::vector<double> uniform_grid(double t_max, std::size_t points);

// All moment functions of one experiment (kernel, law, box, grid). First
// moments come from ODE solves on the box with sources at the origin and at
// the requested y; m_k(., 0, y) and m_k(., 0) are cached per order so that
// each higher order costs one convolution. Not thread-safe.
class MomentEngine {
 public:
  MomentEngine(TransitionKernel kernel, BranchingLaw law, TruncatedLattice lattice,
               std::vector<double> grid, MomentOptions options = {});
  ~MomentEngine();

  const std::vector<double>& grid() const { return grid_; }
  const TruncatedLattice& lattice() const { return lattice_; }

  MomentSeries transition_probability(const Site& x, const Site& y);
  MomentSeries local(int n, const Site& x, const Site& y);
  MomentSeries total(int n, const Site& x);

 private:
  struct Solve {
    std::map<Site, std::vector<double>> value;     // m(t, w, source)
    std::map<Site, std::vector<double>> integral;  // int_0^t m(s, w, source) ds
    std::vector<double> leak;
    std::vector<double> in_box;                    // sum_x m(t, x, source)
  };

  const Solve& solve(const Site& source, double beta, const std::vector<Site>& watch);
  Solve run(const std::vector<double>& initial, double beta, const std::vector<Site>& watch);
  const std::vector<double>& first_local(const Site& x, const Site& y);
  const std::vector<double>& first_total(const Site& x);
  const std::vector<double>& higher_source_local(int k, const Site& y);
  const std::vector<double>& higher_source_total(int k);
  MomentSeries make_series(Quantity q, int n, const Site& x, const Site& y, Provenance p) const;
  void check_uniform() const;
  MomentEngine& doubled();

  TransitionKernel kernel_;
  BranchingLaw law_;
  TruncatedLattice lattice_;
  std::vector<double> grid_;
  MomentOptions options_;
  std::unique_ptr<BoxOperator> op_;

  std::map<std::pair<Site, double>, Solve> solves_;  // keyed by (source, beta)
  std::vector<Site> watch_;
  std::map<std::pair<int, Site>, std::vector<double>> source_local_;  // m_k(., 0, y)
  std::map<std::pair<int, Site>, std::vector<double>> source_local_err_;
  std::map<int, std::vector<double>> source_total_;                   // m_k(., 0)
  std::map<int, std::vector<double>> source_total_err_;
  std::unique_ptr<MomentEngine> doubled_;
};

// Single-series entry points; each builds its own engine.
MomentSeries transition_probability(const TransitionKernel& kernel, const TruncatedLattice& lattice,
                                    std::span<const double> t_grid, const Site& x, const Site& y,
                                    const MomentOptions& options = {});
MomentSeries m1_local(const TransitionKernel& kernel, const BranchingLaw& law,
                      const TruncatedLattice& lattice, std::span<const double> t_grid, const Site& x,
                      const Site& y, const MomentOptions& options = {});
MomentSeries m1_total(const TransitionKernel& kernel, const BranchingLaw& law,
                      const TruncatedLattice& lattice, std::span<const double> t_grid, const Site& x,
                      const MomentOptions& options = {});
MomentSeries mn_local(const TransitionKernel& kernel, const BranchingLaw& law,
                      const TruncatedLattice& lattice, std::span<const double> t_grid, const Site& x,
                      const Site& y, int n, const MomentOptions& options = {});
MomentSeries mn_total(const TransitionKernel& kernel, const BranchingLaw& law,
                      const TruncatedLattice& lattice, std::span<const double> t_grid, const Site& x,
                      int n, const MomentOptions& options = {});

}  // namespace hbrw
