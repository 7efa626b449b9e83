#include "hbrw/runner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "hbrw/spectral.hpp"
#include "json.hpp"

#ifndef HBRW_VERSION
#define HBRW_VERSION "0.0.0"
#endif

namespace hbrw {

using json = nlohmann::json;

std::string tool_version() { return HBRW_VERSION; }

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kernel: return "kernel";
    case Scenario::spectral: return "spectral";
    case Scenario::moments: return "moments";
    case Scenario::simulate: return "simulate";
    case Scenario::verify: return "verify";
  }
  return "?";
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- parsing -----------------------------------------------------------------

namespace {

// A YAML node with its dotted path, for diagnostics.
class Field {
 public:
  Field(YAML::Node node, std::string path, const std::string* source)
      : node_(std::move(node)), path_(std::move(path)), source_(source) {}

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << *source_ << ": field '" << path_ << "'";
    const auto m = node_.Mark();
    if (m.line >= 0) os << " (line " << m.line + 1 << ")";
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  bool has(const std::string& key) const { return node_.IsMap() && node_[key]; }
  Field operator[](const std::string& key) const {
    if (!node_.IsMap()) fail("expected a mapping");
    const auto child = node_[key];
    if (!child) {
      std::ostringstream os;
      os << *source_ << ": missing field '" << (path_.empty() ? key : path_ + "." + key) << "'";
      const auto m = node_.Mark();
      if (m.line >= 0) os << " (in the mapping at line " << m.line + 1 << ")";
      throw ConfigError(os.str());
    }
    return Field(child, path_.empty() ? key : path_ + "." + key, source_);
  }
  Field at(std::size_t i) const { return Field(node_[i], path_ + "[" + std::to_string(i) + "]", source_); }
  std::size_t size() const {
    if (!node_.IsSequence()) fail("expected a list");
    return node_.size();
  }
  const YAML::Node& node() const { return node_; }

  void only(std::initializer_list<const char*> keys) const {
    if (!node_.IsMap()) fail("expected a mapping");
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!ok.count(k)) Field(kv.first, path_.empty() ? k : path_ + "." + k, source_).fail("unknown field");
    }
  }

  template <class T>
  T as() const {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        return node_.as<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        const double v = node_.as<double>();
        if (v != std::floor(v) || v < static_cast<double>(std::numeric_limits<T>::min()) ||
            v > static_cast<double>(std::numeric_limits<T>::max()))
          fail("expected an integer");
        return static_cast<T>(v);
      } else {
        return node_.as<T>();
      }
    } catch (const YAML::Exception&) {
      fail(std::is_same_v<T, std::string> ? "expected a string" : "expected a number");
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? (*this)[key].template as<T>() : fallback;
  }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string* source_;
};

Site parse_site(const Field& f, int d) {
  Site s{};
  if (f.node().IsScalar()) {
    if (d != 1) f.fail("a site in d > 1 must be a list of " + std::to_string(d) + " integers");
    s[0] = f.as<int>();
    return s;
  }
  if (f.size() != static_cast<std::size_t>(d)) f.fail("expected " + std::to_string(d) + " coordinates");
  for (int i = 0; i < d; ++i) s[i] = f.at(i).as<int>();
  return s;
}

std::vector<Site> parse_sites(const Field& f, int d) {
  std::vector<Site> out;
  for (std::size_t i = 0; i < f.size(); ++i) out.push_back(parse_site(f.at(i), d));
  if (out.empty()) f.fail("expected at least one site");
  return out;
}

std::vector<double> parse_doubles(const Field& f) {
  std::vector<double> out;
  for (std::size_t i = 0; i < f.size(); ++i) out.push_back(f.at(i).as<double>());
  return out;
}

std::vector<Quantity> parse_quantities(const Field& f) {
  std::vector<Quantity> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto s = f.at(i).as<std::string>();
    if (s == "total") out.push_back(Quantity::total);
    else if (s == "local") out.push_back(Quantity::local);
    else f.at(i).fail("expected 'total' or 'local'");
  }
  if (out.empty()) f.fail("expected at least one quantity");
  return out;
}

template <class T>
void positive(const Field& parent, const std::string& key, T v) {
  if (!(v > T{})) parent[key].fail("must be positive");
}

KernelSpec parse_kernel(const Field& f) {
  f.only({"d", "alpha", "H", "R"});
  KernelSpec k;
  k.d = f["d"].as<int>();
  if (k.d < 1 || k.d > 3) f["d"].fail("must be 1, 2 or 3");
  k.alpha = f["alpha"].as<double>();
  if (!(k.alpha > 0.0 && k.alpha < 2.0)) f["alpha"].fail("must lie in (0, 2)");
  k.H = f.get<std::string>("H", k.H);
  try {
    AngularWeight::parse(k.H);
  } catch (const InvalidArgument& e) {
    f["H"].fail(e.what());
  }
  k.R = f.get<int>("R", k.R);
  if (k.R < 1) f["R"].fail("must be >= 1");
  return k;
}

LawSpec parse_law(const Field& f) {
  f.only({"b", "beta_over_beta_c", "death", "r_max"});
  LawSpec l;
  l.r_max = f.get<int>("r_max", l.r_max);
  if (l.r_max < 2 || l.r_max > 12) f["r_max"].fail("must lie in [2, 12]");
  if (f.has("b") == f.has("beta_over_beta_c")) f.fail("give exactly one of 'b' and 'beta_over_beta_c'");
  if (f.has("b")) {
    const auto b = f["b"];
    if (!b.node().IsMap()) b.fail("expected a mapping n: rate");
    for (const auto& kv : b.node()) {
      const auto key = kv.first.as<std::string>();
      const Field val = b[key];
      int n = 0;
      try {
        std::size_t pos = 0;
        n = std::stoi(key, &pos);
        if (pos != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        val.fail("offspring counts must be integers");
      }
      if (n < 0 || n == 1) val.fail("offspring count must be 0 or >= 2");
      const double rate = val.as<double>();
      if (!(rate >= 0.0)) val.fail("rate must be >= 0");
      l.b[n] = rate;
    }
  } else {
    l.beta_over_beta_c = f["beta_over_beta_c"].as<double>();
    if (!(*l.beta_over_beta_c >= 0.0)) f["beta_over_beta_c"].fail("must be >= 0");
    l.death = f.get<double>("death", l.death);
    if (!(l.death >= 0.0)) f["death"].fail("must be >= 0");
  }
  return l;
}

TailPolicy parse_tail(const Field& f) {
  const auto s = f.as<std::string>();
  if (s == "pareto") return TailPolicy::pareto;
  if (s == "renormalize") return TailPolicy::renormalize;
  f.fail("expected 'pareto' or 'renormalize'");
}

CapPolicy parse_cap(const Field& f) {
  const auto s = f.as<std::string>();
  if (s == "exclude") return CapPolicy::exclude;
  if (s == "clamp") return CapPolicy::clamp;
  f.fail("expected 'exclude' or 'clamp'");
}

std::string tail_name(TailPolicy t) { return t == TailPolicy::pareto ? "pareto" : "renormalize"; }
std::string cap_name(CapPolicy c) { return c == CapPolicy::exclude ? "exclude" : "clamp"; }

json site_json(const Site& s, int d) {
  json a = json::array();
  for (int i = 0; i < d; ++i) a.push_back(s[i]);
  return a;
}

json sites_json(const std::vector<Site>& v, int d) {
  json a = json::array();
  for (const auto& s : v) a.push_back(site_json(s, d));
  return a;
}

json quantities_json(const std::vector<Quantity>& q) {
  json a = json::array();
  for (auto x : q) a.push_back(quantity_name(x));
  return a;
}

// Config as JSON in the input schema; `full` adds output, threads and seeds.
json config_json(const ExperimentConfig& c, bool full) {
  const int d = c.kernel.d;
  json j;
  j["scenario"] = scenario_name(c.scenario);
  j["kernel"] = {{"d", d}, {"alpha", c.kernel.alpha}, {"H", c.kernel.H}, {"R", c.kernel.R}};
  json law;
  if (c.law.beta_over_beta_c) {
    law["beta_over_beta_c"] = *c.law.beta_over_beta_c;
    law["death"] = c.law.death;
  } else {
    json b = json::object();
    for (const auto& [n, r] : c.law.b) b[std::to_string(n)] = r;
    law["b"] = b;
  }
  law["r_max"] = c.law.r_max;
  j["law"] = law;
  switch (c.scenario) {
    case Scenario::kernel: break;
    case Scenario::spectral:
      j["spectral"] = {{"mode", c.spectral.mode},
                       {"lambdas", c.spectral.lambdas},
                       {"x", sites_json(c.spectral.xs, d)},
                       {"y", site_json(c.spectral.y, d)},
                       {"tol", c.spectral.tol}};
      break;
    case Scenario::moments: {
      const auto& m = c.moments;
      j["moments"] = {{"t_max", m.t_max},         {"points", m.points},   {"box_radius", m.box_radius},
                      {"x", site_json(m.x, d)},   {"y", site_json(m.y, d)}, {"n_max", m.n_max},
                      {"quantities", quantities_json(m.quantities)}, {"truncation_diff", m.truncation_diff}};
      break;
    }
    case Scenario::simulate: {
      const auto& s = c.simulate;
      json o = {{"t_max", s.t_max},
                {"trials", s.trials},
                {"population_cap", s.population_cap},
                {"n_max", s.n_max},
                {"x", site_json(s.x, d)},
                {"watch", sites_json(s.watch, d)},
                {"tail", tail_name(s.tail)},
                {"cap_policy", cap_name(s.cap_policy)},
                {"jump_table_radius", s.jump_table_radius}};
      if (s.snapshots.empty()) o["points"] = s.points;
      else o["snapshots"] = s.snapshots;
      if (full) {
        o["seed"] = s.seed;
        o["threads"] = s.threads;
      }
      j["simulate"] = o;
      break;
    }
    case Scenario::verify: {
      const auto& v = c.verify;
      json o = {{"method", v.method == VerifyMethod::ode ? "ode" : "monte_carlo"},
                {"quantities", quantities_json(v.quantities)},
                {"n_min", v.n_min},
                {"n_max", v.n_max},
                {"x", site_json(v.x, d)},
                {"y", site_json(v.y, d)},
                {"t_max", v.t_max},
                {"points", v.points},
                {"box_radius", v.box_radius},
                {"truncation_diff", v.truncation_diff},
                {"check_constants", v.check_constants},
                {"tolerances",
                 {{"exponent", v.tolerances.exponent}, {"constant", v.tolerances.constant}, {"rate", v.tolerances.rate}}},
                {"constants",
                 {{"box_radius", v.constants.box_radius},
                  {"horizon", v.constants.horizon},
                  {"grid_points", v.constants.grid_points}}}};
      if (v.window) o["window"] = {v.window->t1, v.window->t2};
      if (v.method == VerifyMethod::monte_carlo) o["trials"] = v.trials;
      if (full && v.method == VerifyMethod::monte_carlo) {
        o["seed"] = v.seed;
        o["threads"] = v.threads;
      }
      j["verify"] = o;
      break;
    }
  }
  if (full) {
    j["output"] = c.output_dir;
    j["name"] = c.name;
  }
  return j;
}

}  // namespace

void finalize(ExperimentConfig& c) {
  c.canonical = config_json(c, false).dump();
  c.full = config_json(c, true).dump();
}

std::string config_hash(const ExperimentConfig& c) { return "fnv1a64:" + fnv1a64_hex(config_json(c, false).dump()); }

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig c;
  c.source = source;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": malformed config at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  const Field f(root, "", &c.source);
  if (!root.IsMap()) f.fail("the config must be a mapping");
  f.only({"scenario", "kernel", "law", "spectral", "moments", "simulate", "verify", "output", "name", "schema"});
  if (f.has("schema") && f["schema"].as<int>() != kCsvSchemaVersion) f["schema"].fail("unsupported schema version");

  const auto sc = f["scenario"].as<std::string>();
  if (sc == "kernel") c.scenario = Scenario::kernel;
  else if (sc == "spectral") c.scenario = Scenario::spectral;
  else if (sc == "moments") c.scenario = Scenario::moments;
  else if (sc == "simulate") c.scenario = Scenario::simulate;
  else if (sc == "verify") c.scenario = Scenario::verify;
  else f["scenario"].fail("expected kernel | spectral | moments | simulate | verify");

  for (const char* s : {"spectral", "moments", "simulate", "verify"})
    if (f.has(s) && s != scenario_name(c.scenario)) f[s].fail("section does not belong to scenario " + sc);

  c.kernel = parse_kernel(f["kernel"]);
  const int d = c.kernel.d;
  if (f.has("law")) c.law = parse_law(f["law"]);
  else if (c.scenario != Scenario::kernel) f.fail("missing field 'law'");
  c.output_dir = f.get<std::string>("output", c.output_dir);
  c.name = f.get<std::string>("name", c.name);
  if (c.name.empty() || c.name.find('/') != std::string::npos) f["name"].fail("must be a plain file stem");

  switch (c.scenario) {
    case Scenario::kernel: break;
    case Scenario::spectral: {
      auto& p = c.spectral;
      if (!f.has("spectral")) break;
      const auto s = f["spectral"];
      s.only({"mode", "lambdas", "x", "y", "tol"});
      p.mode = s.get<std::string>("mode", p.mode);
      if (p.mode != "green" && p.mode != "classify") s["mode"].fail("expected 'green' or 'classify'");
      if (s.has("lambdas")) p.lambdas = parse_doubles(s["lambdas"]);
      for (double l : p.lambdas)
        if (!(l >= 0.0)) s["lambdas"].fail("lambdas must be >= 0");
      if (p.mode == "green" && p.lambdas.empty()) s.fail("mode green needs 'lambdas'");
      if (s.has("x")) p.xs = parse_sites(s["x"], d);
      if (s.has("y")) p.y = parse_site(s["y"], d);
      p.tol = s.get<double>("tol", p.tol);
      positive(s, "tol", p.tol);
      break;
    }
    case Scenario::moments: {
      auto& p = c.moments;
      const auto s = f["moments"];
      s.only({"t_max", "points", "box_radius", "x", "y", "n_max", "quantities", "truncation_diff"});
      p.t_max = s["t_max"].as<double>();
      positive(s, "t_max", p.t_max);
      p.points = s.get<std::size_t>("points", p.points);
      if (p.points < 2) s["points"].fail("must be >= 2");
      p.box_radius = s.get<int>("box_radius", p.box_radius);
      if (s.has("box_radius")) positive(s, "box_radius", p.box_radius);
      if (s.has("x")) p.x = parse_site(s["x"], d);
      if (s.has("y")) p.y = parse_site(s["y"], d);
      p.n_max = s.get<int>("n_max", p.n_max);
      if (p.n_max < 1 || p.n_max > 12) s["n_max"].fail("must lie in [1, 12]");
      if (s.has("quantities")) p.quantities = parse_quantities(s["quantities"]);
      p.truncation_diff = s.get<bool>("truncation_diff", p.truncation_diff);
      break;
    }
    case Scenario::simulate: {
      auto& p = c.simulate;
      const auto s = f["simulate"];
      s.only({"t_max", "snapshots", "points", "trials", "seed", "threads", "population_cap", "n_max", "x", "watch",
              "tail", "cap_policy", "jump_table_radius"});
      p.t_max = s["t_max"].as<double>();
      positive(s, "t_max", p.t_max);
      if (s.has("snapshots")) p.snapshots = parse_doubles(s["snapshots"]);
      p.points = s.get<std::size_t>("points", p.points);
      if (p.points < 1) s["points"].fail("must be >= 1");
      p.trials = s["trials"].as<std::uint64_t>();
      positive(s, "trials", p.trials);
      p.seed = s["seed"].as<std::uint64_t>();  // explicit: no clock-based default
      p.threads = s.get<unsigned>("threads", p.threads);
      positive(s, "threads", p.threads);
      p.population_cap = s.get<std::uint64_t>("population_cap", p.population_cap);
      p.n_max = s.get<int>("n_max", p.n_max);
      if (p.n_max < 1) s["n_max"].fail("must be >= 1");
      if (s.has("x")) p.x = parse_site(s["x"], d);
      if (s.has("watch")) p.watch = parse_sites(s["watch"], d);
      if (s.has("tail")) p.tail = parse_tail(s["tail"]);
      if (s.has("cap_policy")) p.cap_policy = parse_cap(s["cap_policy"]);
      p.jump_table_radius = s.get<int>("jump_table_radius", p.jump_table_radius);
      break;
    }
    case Scenario::verify: {
      auto& v = c.verify;
      const auto s = f["verify"];
      s.only({"method", "quantities", "n_min", "n_max", "x", "y", "t_max", "points", "window", "box_radius",
              "truncation_diff", "check_constants", "tolerances", "trials", "seed", "threads", "constants"});
      const auto m = s.get<std::string>("method", "ode");
      if (m == "ode") v.method = VerifyMethod::ode;
      else if (m == "monte_carlo") v.method = VerifyMethod::monte_carlo;
      else s["method"].fail("expected 'ode' or 'monte_carlo'");
      if (s.has("quantities")) v.quantities = parse_quantities(s["quantities"]);
      v.n_min = s.get<int>("n_min", v.n_min);
      v.n_max = s.get<int>("n_max", v.n_max);
      if (v.n_min < 1 || v.n_max < v.n_min || v.n_max > 12) s.fail("need 1 <= n_min <= n_max <= 12");
      if (s.has("x")) v.x = parse_site(s["x"], d);
      if (s.has("y")) v.y = parse_site(s["y"], d);
      v.t_max = s["t_max"].as<double>();
      positive(s, "t_max", v.t_max);
      v.points = s.get<std::size_t>("points", v.points);
      if (v.points < 11) s["points"].fail("must be >= 11");
      if (s.has("window")) {
        const auto w = parse_doubles(s["window"]);
        if (w.size() != 2 || !(w[0] > 0.0 && w[0] < w[1] && w[1] <= v.t_max))
          s["window"].fail("expected [t1, t2] with 0 < t1 < t2 <= t_max");
        v.window = FitWindow{w[0], w[1]};
      }
      v.box_radius = s.get<int>("box_radius", v.box_radius);
      if (s.has("box_radius")) positive(s, "box_radius", v.box_radius);
      v.truncation_diff = s.get<bool>("truncation_diff", v.truncation_diff);
      v.check_constants = s.get<bool>("check_constants", v.check_constants);
      if (s.has("tolerances")) {
        const auto t = s["tolerances"];
        t.only({"exponent", "constant", "rate"});
        v.tolerances.exponent = t.get<double>("exponent", v.tolerances.exponent);
        v.tolerances.constant = t.get<double>("constant", v.tolerances.constant);
        v.tolerances.rate = t.get<double>("rate", v.tolerances.rate);
      }
      if (s.has("constants")) {
        const auto t = s["constants"];
        t.only({"box_radius", "horizon", "grid_points"});
        v.constants.box_radius = t.get<int>("box_radius", v.constants.box_radius);
        v.constants.horizon = t.get<double>("horizon", v.constants.horizon);
        v.constants.grid_points = t.get<std::size_t>("grid_points", v.constants.grid_points);
      }
      if (v.method == VerifyMethod::monte_carlo) {
        v.trials = s["trials"].as<std::uint64_t>();
        v.seed = s["seed"].as<std::uint64_t>();
        v.threads = s.get<unsigned>("threads", v.threads);
        positive(s, "threads", v.threads);
      }
      break;
    }
  }
  finalize(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot read the config file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    json meta;
    try {
      meta = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": malformed sidecar: " + e.what());
    }
    if (!meta.contains("config")) throw ConfigError(path.string() + ": sidecar has no embedded config");
    return parse_config(meta["config"].dump(), path.string());
  }
  return parse_config(text, path.string());
}

TransitionKernel make_kernel(const KernelSpec& spec) {
  return build_kernel(spec.d, spec.alpha, AngularWeight::parse(spec.H), spec.R);
}

BranchingLaw make_law(const LawSpec& spec, const TransitionKernel& kernel) {
  if (!spec.beta_over_beta_c) return build_branching(spec.b, spec.r_max);
  const double bc = beta_c(kernel);
  if (bc == 0.0 && *spec.beta_over_beta_c != 0.0)
    throw ConfigError("law.beta_over_beta_c: beta_c = 0 for d/alpha <= 1; give 'b' explicitly");
  return build_branching({{0, spec.death}, {2, spec.death + *spec.beta_over_beta_c * bc}}, spec.r_max);
}

// --- running -----------------------------------------------------------------

namespace {

// CSV writer that also digests every numeric cell bit by bit.
class CsvSink {
 public:
  CsvSink(const std::filesystem::path& path, const std::string& scenario, const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "# hbrw-csv schema=" << kCsvSchemaVersion << " scenario=" << scenario << " version=" << tool_version()
         << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  CsvSink& num(double v) {
    sep();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out_ << buf;
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    ++count_;
    return *this;
  }
  CsvSink& integer(long long v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvSink& text(const std::string& s) {
    sep();
    if (s.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (char ch : s) out_ << (ch == '"' ? "\"\"" : std::string(1, ch));
      out_ << '"';
    } else {
      out_ << s;
    }
    return *this;
  }
  CsvSink& site(const Site& s, int d) {
    std::string t;
    for (int i = 0; i < d; ++i) t += (i ? " " : "") + std::to_string(s[i]);
    return text(t);
  }
  void end() {
    out_ << '\n';
    first_ = true;
  }
  std::string digest() const { return fnv1a64_hex(bytes_); }
  std::size_t count() const { return count_; }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
  std::string bytes_;
  std::size_t count_ = 0;
};

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v + 0.0);
  return buf;
}

struct Outcome {
  int exit_code = 0;
  std::string summary;
  double quad_error = 0.0;
  double trunc_diff = 0.0;
  json extra = json::object();
};

double site_reach(const std::vector<Site>& xs) {
  double r = 1.0;
  for (const auto& s : xs) r = std::max(r, static_cast<double>(std::abs(s[0]) + std::abs(s[1]) + std::abs(s[2])));
  return r;
}

Outcome run_kernel(const ExperimentConfig& c, CsvSink& csv) {
  const auto k = make_kernel(c.kernel);
  const double row = std::abs(k.a0() + k.tabulated_sum() + k.tail_mass()) / std::abs(k.a0());
  const std::vector<std::pair<std::string, double>> rows{
      {"a0", k.a0()},
      {"tabulated_sum", k.tabulated_sum()},
      {"tail_mass", k.tail_mass()},
      {"tail_sum_error", k.tail_sum_error()},
      {"row_sum_residual", row},
      {"tail_slope", k.tail_slope()},
      {"expected_tail_slope", -(k.d() + k.alpha())},
      {"small_theta_constant", k.small_theta_constant()},
      {"d_over_alpha", k.ratio()},
      {"half_sites", static_cast<double>(k.half_size())}};
  for (const auto& [name, v] : rows) {
    csv.text(name).num(v);
    csv.end();
  }
  Outcome o;
  o.summary = "kernel " + k.id() + ": a0 " + g6(k.a0()) + ", row-sum residual " + g6(row);
  return o;
}

Outcome run_spectral(const ExperimentConfig& c, CsvSink& csv) {
  const auto k = make_kernel(c.kernel);
  const auto law = make_law(c.law, k);
  const auto& p = c.spectral;
  Outcome o;
  if (p.mode == "green") {
    const double lmin = *std::min_element(p.lambdas.begin(), p.lambdas.end());
    std::vector<Site> diffs;
    for (const auto& x : p.xs) diffs.push_back({x[0] - p.y[0], x[1] - p.y[1], x[2] - p.y[2]});
    GreenSolver s(k, site_reach(diffs), lmin);
    for (double l : p.lambdas) {
      const auto vals = s.green(l, diffs);
      for (std::size_t i = 0; i < diffs.size(); ++i) {
        csv.text("green").num(l).site(p.xs[i], k.d()).site(p.y, k.d()).num(vals[i].value).num(vals[i].error);
        csv.end();
        o.quad_error = std::max(o.quad_error, vals[i].error);
      }
    }
    o.summary = "green: " + std::to_string(p.lambdas.size() * diffs.size()) + " values";
    return o;
  }
  const auto rep = classify(k, law, p.tol, {}, site_reach(p.xs) * 2.0);
  csv.text("beta_c").num(0.0).site({}, k.d()).site({}, k.d()).num(rep.beta_c).num(rep.quad_error);
  csv.end();
  csv.text("G0").num(0.0).site({}, k.d()).site({}, k.d()).num(rep.g0).num(rep.quad_error);
  csv.end();
  o.quad_error = rep.quad_error;
  o.extra["regime"] = regime_name(rep.classification);
  o.extra["band"] = band_name(rep.band);
  o.extra["d_over_alpha"] = rep.ratio;
  o.extra["beta"] = rep.beta;
  o.extra["beta_c"] = rep.beta_c;
  o.extra["G0"] = rep.g0;
  if (rep.eigenvalue) {
    o.extra["lambda0"] = *rep.eigenvalue;
    o.extra["eigen_residual"] = rep.residual;
    csv.text("lambda0").num(*rep.eigenvalue).site({}, k.d()).site({}, k.d()).num(*rep.eigenvalue).num(rep.residual);
    csv.end();
  }
  if (rep.has_c_const())
    for (const auto& x : p.xs)
      for (const auto& y : p.xs) {
        csv.text("c_lambda0").num(*rep.eigenvalue).site(x, k.d()).site(y, k.d()).num(rep.c_const(x, y)).num(rep.c_const_error());
        csv.end();
      }
  o.summary = "regime " + regime_name(rep.classification) + " (d/alpha " + g6(rep.ratio) + " in " +
              band_name(rep.band) + ", beta " + g6(rep.beta) + ", beta_c " + g6(rep.beta_c) +
              (rep.eigenvalue ? ", lambda_0 " + g6(*rep.eigenvalue) : std::string()) + ")";
  return o;
}

Outcome run_moments(const ExperimentConfig& c, CsvSink& csv) {
  const auto k = make_kernel(c.kernel);
  const auto law = make_law(c.law, k);
  const auto& p = c.moments;
  MomentOptions mo;
  mo.truncation_diff = p.truncation_diff;
  MomentEngine eng(k, law, TruncatedLattice(k.d(), p.box_radius), uniform_grid(p.t_max, p.points), mo);
  Outcome o;
  std::size_t rows = 0;
  for (auto q : p.quantities)
    for (int n = 1; n <= p.n_max; ++n) {
      const auto s = q == Quantity::total ? eng.total(n, p.x) : eng.local(n, p.x, p.y);
      for (std::size_t i = 0; i < s.grid.size(); ++i) {
        auto at = [&](const std::vector<double>& v) { return v.empty() ? 0.0 : v[i]; };
        csv.num(s.grid[i]).text(quantity_name(q)).integer(n).site(p.x, k.d()).site(q == Quantity::local ? p.y : Site{}, k.d());
        csv.num(s.values[i]).num(at(s.error)).num(at(s.leak)).num(at(s.trunc_diff)).num(at(s.cross_check));
        csv.text(provenance_name(s.provenance));
        csv.end();
        ++rows;
        if (!s.trunc_diff.empty() && s.values[i] != 0.0)
          o.trunc_diff = std::max(o.trunc_diff, std::abs(s.trunc_diff[i] / s.values[i]));
        o.quad_error = std::max(o.quad_error, at(s.error));
      }
    }
  o.summary = "moments: " + std::to_string(rows) + " rows";
  return o;
}

SimulationConfig simulation_config(const ExperimentConfig& c, const TransitionKernel& k, const BranchingLaw& law) {
  const auto& p = c.simulate;
  std::vector<double> snaps = p.snapshots;
  if (snaps.empty()) snaps = p.points == 1 ? std::vector<double>{p.t_max} : uniform_grid(p.t_max, p.points);
  SimulationConfig s{k, law, p.x, p.t_max, snaps, p.watch};
  s.n_max = p.n_max;
  s.trials = p.trials;
  s.master_seed = p.seed;
  s.population_cap = p.population_cap;
  s.jump_table_radius = p.jump_table_radius;
  s.tail = p.tail;
  s.cap_policy = p.cap_policy;
  s.threads = p.threads;
  return s;
}

Outcome run_simulate(const ExperimentConfig& c, CsvSink& csv) {
  const auto k = make_kernel(c.kernel);
  const auto law = make_law(c.law, k);
  const auto res = estimate(simulation_config(c, k, law));
  for (const auto& r : res.rows) {
    csv.num(r.t).text(r.quantity).integer(r.n).site(r.quantity == "local" ? r.y : Site{}, k.d());
    csv.num(r.estimate).num(r.std_error).integer(static_cast<long long>(res.used_trials));
    csv.integer(static_cast<long long>(res.capped_trials));
    csv.end();
  }
  Outcome o;
  o.extra["trials"] = res.trials;
  o.extra["used_trials"] = res.used_trials;
  o.extra["capped_trials"] = res.capped_trials;
  o.extra["discarded_mass_ratio"] = res.discarded_mass_ratio;
  o.extra["events"] = res.events;
  o.summary = "simulate: " + std::to_string(res.used_trials) + "/" + std::to_string(res.trials) +
              " trials used, " + std::to_string(res.capped_trials) + " capped";
  return o;
}

Outcome run_verify(const ExperimentConfig& c, CsvSink& csv) {
  const auto k = make_kernel(c.kernel);
  const auto law = make_law(c.law, k);
  const auto reports = verify(k, law, c.verify);
  Outcome o;
  std::size_t passed = 0;
  for (const auto& r : reports) {
    const auto& pr = r.prediction;
    csv.text(quantity_name(r.quantity)).integer(r.n).site(r.x, k.d()).site(r.y, k.d()).text(r.method);
    csv.text(form_name(r.form)).num(r.p_hat).num(r.q_hat).integer(r.q_identifiable).num(r.rate_hat);
    csv.num(r.limit_hat).num(r.drift).num(r.window.t1).num(r.window.t2).integer(static_cast<long long>(r.points));
    csv.num(r.residual).num(r.truncation_diff);
    csv.num(pr ? pr->p : 0.0).num(pr ? pr->q : 0.0).num(pr ? pr->rate : 0.0);
    csv.text(pr ? pr->tag : "").text(r.constant ? r.constant->name : "").num(r.constant ? r.constant->value : 0.0);
    csv.num(r.tolerance).num(r.deviation).text(r.pass ? "PASS" : "FAIL").text(r.note);
    csv.end();
    passed += r.pass;
    o.trunc_diff = std::max(o.trunc_diff, r.truncation_diff);
    if (r.constant) o.quad_error = std::max(o.quad_error, r.constant->error);
  }
  const bool ok = passed == reports.size();
  o.exit_code = ok ? 0 : 2;
  o.summary = std::string(ok ? "PASS" : "FAIL") + " " + std::to_string(passed) + "/" + std::to_string(reports.size()) +
              " reports within tolerance";
  return o;
}

std::vector<std::string> columns_for(const ExperimentConfig& c) {
  switch (c.scenario) {
    case Scenario::kernel: return {"quantity", "value"};
    case Scenario::spectral: return {"kind", "lambda", "x", "y", "value", "quad_error"};
    case Scenario::moments:
      return {"t", "quantity", "n", "x", "y", "value", "error", "leak", "trunc_diff", "cross_check", "provenance"};
    case Scenario::simulate: return {"t", "quantity", "n", "y", "estimate", "stderr", "trials", "capped"};
    case Scenario::verify:
      return {"quantity", "n",        "x",        "y",         "method",   "form",     "p_hat",     "q_hat",
              "q_identifiable", "rate_hat", "limit_hat", "drift", "t1",       "t2",       "points",    "residual",
              "truncation_diff", "pred_p", "pred_q", "pred_rate", "tag", "constant", "constant_value", "tolerance",
              "deviation", "verdict", "note"};
  }
  return {};
}

}  // namespace

RunResult run(ExperimentConfig c, const RunOptions& options) {
  if (options.out_dir) c.output_dir = options.out_dir->string();
  if (options.threads) {
    if (*options.threads == 0) throw ConfigError("--threads must be positive");
    c.simulate.threads = *options.threads;
    c.verify.threads = *options.threads;
  }
  if (options.seed) {
    c.simulate.seed = *options.seed;
    c.verify.seed = *options.seed;
  }
  finalize(c);

  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  RunResult res;
  res.csv = dir / (c.name + ".csv");
  res.sidecar = dir / (c.name + ".meta.json");

  CsvSink csv(res.csv, scenario_name(c.scenario), columns_for(c));
  Outcome o;
  try {
    switch (c.scenario) {
      case Scenario::kernel: o = run_kernel(c, csv); break;
      case Scenario::spectral: o = run_spectral(c, csv); break;
      case Scenario::moments: o = run_moments(c, csv); break;
      case Scenario::simulate: o = run_simulate(c, csv); break;
      case Scenario::verify: o = run_verify(c, csv); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("scenario " + scenario_name(c.scenario) + " (" + c.source + "): " + e.what());
  }

  json meta;
  meta["tool"] = "hbrw";
  meta["version"] = tool_version();
  meta["csv_schema"] = kCsvSchemaVersion;
  meta["scenario"] = scenario_name(c.scenario);
  meta["config_hash"] = config_hash(c);
  meta["config"] = json::parse(c.full);
  std::uint64_t seed = 0;
  unsigned threads = 1;
  if (c.scenario == Scenario::simulate) {
    seed = c.simulate.seed;
    threads = c.simulate.threads;
  } else if (c.scenario == Scenario::verify && c.verify.method == VerifyMethod::monte_carlo) {
    seed = c.verify.seed;
    threads = c.verify.threads;
  }
  meta["seed"] = seed;
  meta["threads"] = threads;
  meta["quadrature_error"] = o.quad_error;
  meta["truncation_diff"] = o.trunc_diff;
  meta["results"] = o.extra;
  meta["outputs"] = {{"csv", res.csv.filename().string()}, {"digest", csv.digest()}, {"values", csv.count()}};
  meta["exit_code"] = o.exit_code;
  meta["summary"] = o.summary;
  std::ofstream(res.sidecar) << meta.dump(2) << '\n';

  res.exit_code = o.exit_code;
  res.summary = o.summary;
  return res;
}

bool repro_check(const std::filesystem::path& a, const std::filesystem::path& b) {
  auto load = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ReproError(p.string() + ": cannot read the sidecar");
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ReproError(p.string() + ": malformed sidecar: " + e.what());
    }
  };
  const auto ja = load(a);
  const auto jb = load(b);
  for (const auto* j : {&ja, &jb})
    if (!j->contains("config_hash") || !j->contains("outputs")) throw ReproError("sidecar lacks config_hash/outputs");
  if (ja["config_hash"] != jb["config_hash"])
    throw ReproError("config hashes differ: " + ja["config_hash"].get<std::string>() + " vs " +
                     jb["config_hash"].get<std::string>());
  return ja["outputs"]["digest"] == jb["outputs"]["digest"] && ja["outputs"]["values"] == jb["outputs"]["values"];
}

}  // namespace hbrw
