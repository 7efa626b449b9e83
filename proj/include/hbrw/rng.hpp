#pragma once

#include <cmath>
#include <cstdint>

namespace hbrw {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream: the state is a pure function of the key, so a
// stream can be recreated anywhere from (seed, trial, lineage).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t lineage)
      : key_(mix64(seed ^ mix64(trial ^ mix64(lineage ^ 0x5851f42d4c957f2dULL)))) {}

  std::uint64_t next() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  // uniform on (0, 1]
  double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hbrw
