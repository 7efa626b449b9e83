#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hbrw/asymptotics.hpp"
#include "hbrw/error.hpp"
#include "hbrw/kernel.hpp"
#include "hbrw/moments.hpp"
#include "hbrw/simulate.hpp"

namespace hbrw {

inline constexpr int kCsvSchemaVersion = 1;
std::string tool_version();

// Config problems, with the offending field path and line when known.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ReproError : public Error {
 public:
  using Error::Error;
};

struct KernelSpec {
  int d = 1;
  double alpha = 1.0;
  std::string H = "const 1";
  int R = 4000;
};

// Either explicit rates b or a multiple of beta_c realised as deaths at rate
// `death` and binary splits at rate death + multiple * beta_c.
struct LawSpec {
  std::map<int, double> b;
  std::optional<double> beta_over_beta_c;
  double death = 1.0;
  int r_max = 4;
};

enum class Scenario { kernel, spectral, moments, simulate, verify };
std::string scenario_name(Scenario s);

struct SpectralParams {
  std::string mode = "classify";  // green | classify
  std::vector<double> lambdas;
  std::vector<Site> xs{Site{}};
  Site y{};  // green rows report G_lambda(x, y) = G_lambda(x - y, 0)
  double tol = 1e-9;
};

struct MomentsParams {
  double t_max = 10.0;
  std::size_t points = 1001;
  int box_radius = 500;
  Site x{};
  Site y{};
  int n_max = 1;
  std::vector<Quantity> quantities{Quantity::total, Quantity::local};
  bool truncation_diff = false;
};

struct SimulateParams {
  double t_max = 10.0;
  std::vector<double> snapshots;  // empty: `points` uniform snapshots on [0, t_max]
  std::size_t points = 11;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::uint64_t population_cap = 1'000'000;
  int n_max = 2;
  Site x{};
  std::vector<Site> watch{Site{}};
  TailPolicy tail = TailPolicy::pareto;
  CapPolicy cap_policy = CapPolicy::exclude;
  int jump_table_radius = 0;
};

struct ExperimentConfig {
  std::string source;  // file name, for diagnostics
  Scenario scenario = Scenario::spectral;
  KernelSpec kernel;
  LawSpec law;
  SpectralParams spectral;
  MomentsParams moments;
  SimulateParams simulate;
  VerifyRequest verify;
  std::string output_dir = "out";
  std::string name = "run";
  // Canonical JSON text of the experiment (everything but output, threads and seed).
  std::string canonical;
  // Canonical JSON text of the full config, embedded in the sidecar.
  std::string full;
};

// Recomputes `canonical` and `full` from the typed fields.
void finalize(ExperimentConfig& config);

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
// YAML config, or a metadata sidecar (its embedded config).
ExperimentConfig load_config(const std::filesystem::path& path);

std::string fnv1a64_hex(const std::string& bytes);
std::string config_hash(const ExperimentConfig& config);

TransitionKernel make_kernel(const KernelSpec& spec);
BranchingLaw make_law(const LawSpec& spec, const TransitionKernel& kernel);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
};

struct RunResult {
  int exit_code = 0;  // 0 pass, 2 verification failure
  std::filesystem::path csv;
  std::filesystem::path sidecar;
  std::string summary;
};

// Executes the scenario and writes <name>.csv and <name>.meta.json.
RunResult run(ExperimentConfig config, const RunOptions& options = {});

// True iff the numeric outputs recorded by both sidecars are bit-identical;
// ReproError when the config hashes differ.
bool repro_check(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace hbrw
