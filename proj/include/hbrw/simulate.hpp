#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbrw/kernel.hpp"
#include "hbrw/rng.hpp"

namespace hbrw {

enum class TailPolicy {
  renormalize,  // jumps beyond the table radius are redistributed over the table
  pareto        // continuum Pareto tail beyond the table radius, rounded to the lattice
};

// O(1) jump sampling from a(z) / (-a0) over |z| <= radius (Vose alias table
// over the half set, sign by a fair bit).
class JumpSampler {
 public:
  JumpSampler(const TransitionKernel& kernel, int radius, TailPolicy tail = TailPolicy::pareto);

  Site sample(Stream& rng) const;

  int radius() const { return radius_; }
  std::size_t support() const { return 2 * sites_.size(); }
  // Share of -a0 beyond the radius: redistributed (renormalize) or drawn
  // from the continuum tail (pareto).
  double discarded_mass_ratio() const { return discarded_; }
  // Probability of z under the sampler (table part only).
  double probability(const Site& z) const;

 private:
  int d_;
  int radius_;
  double alpha_;
  TailPolicy tail_;
  double r_eff_ = 0.0;
  double discarded_ = 0.0;
  std::vector<Site> sites_;
  std::vector<double> prob_;   // alias acceptance
  std::vector<std::uint32_t> alias_;
  std::vector<double> mass_;   // normalized per half site, for probability()
};

enum class CapPolicy {
  exclude,  // capped trials do not enter the estimates
  clamp     // capped trials enter with the counts reached when stopped
};

struct SimulationConfig {
  TransitionKernel kernel;
  BranchingLaw law;
  Site start{};
  double horizon = 1.0;
  std::vector<double> snapshot_times;
  std::vector<Site> watch;  // y for mu_t(y)
  int n_max = 2;
  std::uint64_t trials = 1;
  std::uint64_t master_seed = 0;
  std::uint64_t population_cap = 1'000'000;
  int jump_table_radius = 0;  // 0: the kernel table radius
  TailPolicy tail = TailPolicy::pareto;
  CapPolicy cap_policy = CapPolicy::exclude;
  unsigned threads = 1;
};

void validate(const SimulationConfig& config);

struct TrialOutcome {
  // counts[s] = mu at snapshot s; local[s][k] = mu(watch[k]) at snapshot s
  std::vector<std::uint64_t> total;
  std::vector<std::vector<std::uint64_t>> local;
  bool capped = false;
  double capped_at = 0.0;
  std::uint64_t particles = 0;  // lineages simulated
  std::uint64_t events = 0;
};

TrialOutcome run_trial(const SimulationConfig& config, const JumpSampler& sampler, std::uint64_t trial_index);
TrialOutcome run_trial(const SimulationConfig& config, std::uint64_t trial_index);

// Mean and spread of one sample variable; merges are exact up to rounding
// and are applied in a fixed order.
struct MeanAccumulator {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x);
  void merge(const MeanAccumulator& other);
  double stderr_of_mean() const;
};

struct MomentEstimate {
  double t = 0.0;
  std::string quantity;  // "total" or "local"
  Site y{};
  int n = 1;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct SimulationResult {
  std::vector<MomentEstimate> rows;  // ordered by snapshot, quantity, y, n
  std::uint64_t trials = 0;
  std::uint64_t used_trials = 0;
  std::uint64_t capped_trials = 0;
  std::uint64_t master_seed = 0;
  double discarded_mass_ratio = 0.0;
  std::uint64_t events = 0;

  const MomentEstimate& find(double t, const std::string& quantity, int n, const Site& y = {}) const;
};

// Trials are reduced in fixed blocks merged in index order, so the result is
// bit-identical for any thread count.
SimulationResult estimate(const SimulationConfig& config);

}  // namespace hbrw
