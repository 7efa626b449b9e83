#include "hbrw/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "hbrw/error.hpp"

namespace hbrw {

// --- jump sampler ------------------------------------------------------------

JumpSampler::JumpSampler(const TransitionKernel& kernel, int radius, TailPolicy tail)
    : d_(kernel.d()), radius_(radius), alpha_(kernel.alpha()), tail_(tail) {
  if (radius < 1) throw InvalidArgument("jump sampler: radius must be >= 1");
  if (radius > kernel.table_radius())
    throw InvalidArgument("jump sampler: radius exceeds the kernel table radius");
  if (tail == TailPolicy::pareto) {
    if (radius != kernel.table_radius())
      throw InvalidArgument("jump sampler: the pareto tail starts at the kernel table radius");
    if (d_ > 1 && !kernel.H().is_constant())
      throw InvalidArgument("jump sampler: the pareto tail needs a constant H in d >= 2");
    r_eff_ = kernel.tail().r_eff();
  }
  std::vector<double> w;
  double kept = 0.0;
  for (std::size_t j = 0; j < kernel.half_size(); ++j) {
    const Site& z = kernel.half_sites()[j];
    if (norm(z, d_) > radius) continue;
    sites_.push_back(z);
    w.push_back(kernel.half_rate(j));
    kept += 2.0 * kernel.half_rate(j);
  }
  if (sites_.empty()) throw InvalidArgument("jump sampler: empty support");
  const double total = -kernel.a0();
  discarded_ = std::max(0.0, 1.0 - kept / total);

  // Vose's alias method
  const std::size_t n = w.size();
  double half_sum = 0.0;
  for (double v : w) half_sum += v;
  mass_.resize(n);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    mass_[i] = w[i] / half_sum;
    scaled[i] = mass_[i] * static_cast<double>(n);
  }
  prob_.assign(n, 1.0);
  alias_.resize(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  for (auto i : small) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

double JumpSampler::probability(const Site& z) const {
  Site pos = z;
  // bring to the half set: first nonzero coordinate positive
  for (int k = 0; k < d_; ++k) {
    if (pos[k] == 0) continue;
    if (pos[k] < 0)
      for (int j = 0; j < d_; ++j) pos[j] = -pos[j];
    break;
  }
  const auto it = std::find(sites_.begin(), sites_.end(), pos);
  if (it == sites_.end()) return 0.0;
  const double table = 1.0 - (tail_ == TailPolicy::pareto ? discarded_ : 0.0);
  return 0.5 * mass_[static_cast<std::size_t>(it - sites_.begin())] * table;
}

Site JumpSampler::sample(Stream& rng) const {
  if (tail_ == TailPolicy::pareto && rng.uniform() <= discarded_) {
    // |u| has density ~ r^(-1-alpha) beyond r_eff
    const double r = r_eff_ * std::pow(rng.uniform(), -1.0 / alpha_);
    double u[kMaxDim] = {1.0, 0.0, 0.0};
    if (d_ == 1) {
      u[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    } else if (d_ == 2) {
      const double phi = 2.0 * std::numbers::pi * rng.uniform();
      u[0] = std::cos(phi);
      u[1] = std::sin(phi);
    } else {
      const double c = 2.0 * rng.uniform() - 1.0;
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      const double phi = 2.0 * std::numbers::pi * rng.uniform();
      u[0] = s * std::cos(phi);
      u[1] = s * std::sin(phi);
      u[2] = c;
    }
    Site z{};
    for (int k = 0; k < d_; ++k) {
      const double v = std::round(r * u[k]);
      z[k] = static_cast<int>(std::clamp(v, -1e9, 1e9));
    }
    return z;
  }
  const std::size_t n = sites_.size();
  const std::uint64_t bits = rng.next();
  const std::size_t col = static_cast<std::size_t>((bits >> 11) % n);
  const double coin = rng.uniform();
  const std::size_t i = coin <= prob_[col] ? col : alias_[col];
  Site z = sites_[i];
  if (bits & 1U)
    for (int k = 0; k < d_; ++k) z[k] = -z[k];
  return z;
}

// --- trials ------------------------------------------------------------------

void validate(const SimulationConfig& c) {
  if (c.trials < 1) throw InvalidArgument("simulate: trials must be >= 1");
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw InvalidArgument("simulate: horizon must be > 0");
  if (c.snapshot_times.empty()) throw InvalidArgument("simulate: snapshot_times must not be empty");
  for (std::size_t i = 0; i < c.snapshot_times.size(); ++i) {
    const double t = c.snapshot_times[i];
    if (!(t >= 0.0 && t <= c.horizon)) throw InvalidArgument("simulate: snapshot_times must lie in [0, horizon]");
    if (i > 0 && !(t > c.snapshot_times[i - 1]))
      throw InvalidArgument("simulate: snapshot_times must be strictly increasing");
  }
  if (c.population_cap < 1) throw InvalidArgument("simulate: population_cap must be >= 1");
  if (c.n_max < 1 || c.n_max > kMaxMomentOrder) throw InvalidArgument("simulate: n_max must be in [1, 12]");
  if (c.jump_table_radius < 0) throw InvalidArgument("simulate: jump_table_radius must be >= 0");
  for (int k = c.kernel.d(); k < kMaxDim; ++k)
    if (c.start[k] != 0) throw InvalidArgument("simulate: start has more coordinates than d");
}

namespace {

struct Particle {
  double born;
  Site pos;
  std::uint64_t lineage;
};

bool at_origin(const Site& x) { return x[0] == 0 && x[1] == 0 && x[2] == 0; }

Site add(const Site& a, const Site& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

std::uint64_t child_lineage(std::uint64_t parent, std::uint64_t j) {
  return mix64(parent * 0x2545f4914f6cdd1dULL + j + 1);
}

JumpSampler make_sampler(const SimulationConfig& c) {
  const int radius = c.jump_table_radius > 0 ? c.jump_table_radius : c.kernel.table_radius();
  return JumpSampler(c.kernel, radius, c.tail);
}

}  // namespace

TrialOutcome run_trial(const SimulationConfig& config, std::uint64_t trial_index) {
  return run_trial(config, make_sampler(config), trial_index);
}

TrialOutcome run_trial(const SimulationConfig& c, const JumpSampler& sampler, std::uint64_t trial_index) {
  if (trial_index >= c.trials) throw InvalidArgument("simulate: trial index out of range");
  const auto& snaps = c.snapshot_times;
  const std::size_t ns = snaps.size();
  TrialOutcome out;
  out.total.assign(ns, 0);
  out.local.assign(ns, std::vector<std::uint64_t>(c.watch.size(), 0));

  const double walk_rate = -c.kernel.a0();
  const double branch_rate = c.law.event_rate();
  const double origin_rate = walk_rate + branch_rate;
  // offspring numbers n != 1 with cumulative probabilities b_n / (-b_1)
  std::vector<std::pair<int, double>> offspring;
  {
    double acc = 0.0;
    for (const auto& [n, b] : c.law.b()) {
      if (n == 1 || b <= 0.0) continue;
      acc += b / branch_rate;
      offspring.emplace_back(n, acc);
    }
  }

  std::vector<Particle> stack{{0.0, c.start, 1}};
  const auto cap_hit = [&](double t) {
    out.capped = true;
    out.capped_at = t;
  };

  while (!stack.empty() && !out.capped) {
    Particle p = stack.back();
    stack.pop_back();
    ++out.particles;
    Stream rng(c.master_seed, trial_index, p.lineage);
    double t = p.born;
    Site x = p.pos;
    std::size_t s = static_cast<std::size_t>(std::lower_bound(snaps.begin(), snaps.end(), t) - snaps.begin());
    std::uint64_t children = 0;
    while (true) {
      const bool origin = at_origin(x);
      const double rate = origin ? origin_rate : walk_rate;
      const double t_next = t + rng.exponential(rate);
      // alive at x on [t, t_next)
      for (; s < ns && snaps[s] < t_next; ++s) {
        if (++out.total[s] > c.population_cap) {
          cap_hit(snaps[s]);
          break;
        }
        for (std::size_t k = 0; k < c.watch.size(); ++k)
          if (c.watch[k] == x) ++out.local[s][k];
      }
      if (out.capped || t_next > c.horizon) break;
      ++out.events;
      t = t_next;
      if (origin && branch_rate > 0.0 && rng.uniform() * origin_rate > walk_rate) {
        const double u = rng.uniform();
        int n = offspring.back().first;
        for (const auto& [m, cum] : offspring)
          if (u <= cum) {
            n = m;
            break;
          }
        for (int j = 0; j < n; ++j) stack.push_back({t, x, child_lineage(p.lineage, children++)});
        if (stack.size() > c.population_cap) cap_hit(t);
        break;
      }
      x = add(x, sampler.sample(rng));
    }
  }
  return out;
}

// --- aggregation -------------------------------------------------------------

void MeanAccumulator::add(double x) {
  count += 1.0;
  const double delta = x - mean;
  mean += delta / count;
  m2 += delta * (x - mean);
}

void MeanAccumulator::merge(const MeanAccumulator& o) {
  if (o.count == 0.0) return;
  if (count == 0.0) {
    *this = o;
    return;
  }
  const double n = count + o.count;
  const double delta = o.mean - mean;
  mean += delta * o.count / n;
  m2 += o.m2 + delta * delta * count * o.count / n;
  count = n;
}

double MeanAccumulator::stderr_of_mean() const {
  if (count < 2.0) return 0.0;
  return std::sqrt(m2 / (count - 1.0) / count);
}

const MomentEstimate& SimulationResult::find(double t, const std::string& quantity, int n, const Site& y) const {
  for (const auto& r : rows)
    if (r.t == t && r.quantity == quantity && r.n == n && (quantity == "total" || r.y == y)) return r;
  throw InvalidArgument("simulate: no estimate for the requested (t, quantity, n, y)");
}

namespace {

constexpr std::uint64_t kBlock = 256;

struct Block {
  // [snapshot][variable][n-1]; variable 0 = total, 1.. = watch sites
  std::vector<MeanAccumulator> acc;
  std::uint64_t used = 0;
  std::uint64_t capped = 0;
  std::uint64_t events = 0;
};

}  // namespace

SimulationResult estimate(const SimulationConfig& c) {
  validate(c);
  const JumpSampler sampler = make_sampler(c);
  const std::size_t ns = c.snapshot_times.size();
  const std::size_t nv = 1 + c.watch.size();
  const std::size_t nm = static_cast<std::size_t>(c.n_max);
  const std::size_t slots = ns * nv * nm;
  const std::uint64_t nblocks = (c.trials + kBlock - 1) / kBlock;
  std::vector<Block> blocks(nblocks);

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  const auto worker = [&] {
    try {
      for (std::uint64_t b; !failed && (b = next.fetch_add(1)) < nblocks;) {
        Block& blk = blocks[b];
        blk.acc.assign(slots, {});
        const std::uint64_t hi = std::min(c.trials, (b + 1) * kBlock);
        for (std::uint64_t i = b * kBlock; i < hi; ++i) {
          const auto r = run_trial(c, sampler, i);
          blk.events += r.events;
          if (r.capped) {
            ++blk.capped;
            if (c.cap_policy == CapPolicy::exclude) continue;
          }
          ++blk.used;
          for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t v = 0; v < nv; ++v) {
              const double mu = static_cast<double>(v == 0 ? r.total[s] : r.local[s][v - 1]);
              double pw = 1.0;
              for (std::size_t n = 0; n < nm; ++n) {
                pw *= mu;
                blk.acc[(s * nv + v) * nm + n].add(pw);
              }
            }
        }
      }
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(c.threads, static_cast<unsigned>(nblocks)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  // pairwise merge in block order
  for (std::uint64_t width = 1; width < nblocks; width *= 2)
    for (std::uint64_t i = 0; i + width < nblocks; i += 2 * width) {
      Block& a = blocks[i];
      const Block& b = blocks[i + width];
      for (std::size_t k = 0; k < slots; ++k) a.acc[k].merge(b.acc[k]);
      a.used += b.used;
      a.capped += b.capped;
      a.events += b.events;
    }

  SimulationResult res;
  const Block& all = blocks.front();
  res.trials = c.trials;
  res.used_trials = all.used;
  res.capped_trials = all.capped;
  res.master_seed = c.master_seed;
  res.discarded_mass_ratio = sampler.discarded_mass_ratio();
  res.events = all.events;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t n = 0; n < nm; ++n) {
        const auto& a = all.acc[(s * nv + v) * nm + n];
        MomentEstimate e;
        e.t = c.snapshot_times[s];
        e.quantity = v == 0 ? "total" : "local";
        e.y = v == 0 ? Site{} : c.watch[v - 1];
        e.n = static_cast<int>(n + 1);
        e.estimate = a.mean;
        e.std_error = a.stderr_of_mean();
        res.rows.push_back(e);
      }
  return res;
}

}  // namespace hbrw
