#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hbrw/runner.hpp"
#include "json.hpp"

namespace {

using json = nlohmann::json;
using hbrw::ConfigError;

// "1", "1,0" or "1 0 0" -> [1, 0, 0]
json parse_site_flag(const std::string& text, const std::string& flag) {
  std::string t = text;
  for (char& ch : t)
    if (ch == ',') ch = ' ';
  std::istringstream in(t);
  json out = json::array();
  std::string tok;
  while (in >> tok) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) throw ConfigError(flag + ": '" + text + "' is not a lattice site");
    out.push_back(v);
  }
  if (out.empty() || out.size() > 3) throw ConfigError(flag + ": '" + text + "' is not a lattice site");
  return out;
}

// "0:1,2:1.5" -> {"0": 1, "2": 1.5}
json parse_b_flag(const std::string& text) {
  json b = json::object();
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("--b: expected n:rate pairs, got '" + item + "'");
    try {
      b[item.substr(0, colon)] = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--b: rate in '" + item + "' is not a number");
    }
  }
  if (b.empty()) throw ConfigError("--b: empty map");
  return b;
}

// Kernel and law flags shared by the model-level subcommands.
struct ModelFlags {
  std::string config;
  std::optional<int> d;
  std::optional<double> alpha;
  std::optional<std::string> H;
  std::optional<int> R;
  std::optional<std::string> b;
  std::optional<double> beta;
  std::optional<double> beta_ratio;
  std::optional<int> r_max;
  std::string out;
  std::string name;

  void attach(CLI::App* app, bool with_law) {
    app->add_option("--config", config, "Config file (YAML) or metadata sidecar to start from");
    app->add_option("--d", d, "Lattice dimension (1..3)");
    app->add_option("--alpha", alpha, "Tail index in (0, 2)");
    app->add_option("--H", H, "Angular weight: 'const c' or 'cubic a b'");
    app->add_option("--R", R, "Kernel table radius");
    if (with_law) {
      app->add_option("--b", b, "Branching rates, e.g. 0:1,2:1");
      app->add_option("--beta", beta, "Net branching rate (pure birth if >= 0, pure death otherwise)");
      app->add_option("--beta-ratio", beta_ratio, "Branching as a multiple of beta_c (deaths at rate 1)");
      app->add_option("--r-max", r_max, "Highest factorial moment kept");
    }
    app->add_option("--out", out, "Output directory");
    app->add_option("--name", name, "Output file stem");
  }

  json document(const std::string& scenario) const {
    json j;
    if (!config.empty()) {
      j = json::parse(hbrw::load_config(config).full);
      const std::string old = j["scenario"];
      if (old != scenario) {
        j.erase(old);
        j["scenario"] = scenario;
      }
    } else {
      j = {{"scenario", scenario}, {"kernel", json::object()}, {"name", scenario}};
    }
    auto& k = j["kernel"];
    if (d) k["d"] = *d;
    if (alpha) k["alpha"] = *alpha;
    if (H) k["H"] = *H;
    if (R) k["R"] = *R;
    const int given = (b ? 1 : 0) + (beta ? 1 : 0) + (beta_ratio ? 1 : 0);
    if (given > 1) throw ConfigError("give at most one of --b, --beta and --beta-ratio");
    json law = j.contains("law") ? j["law"] : json::object();
    if (given) law = json::object();
    if (b) law["b"] = parse_b_flag(*b);
    if (beta) law["b"] = *beta >= 0.0 ? json{{"2", *beta}} : json{{"0", -*beta}};
    if (beta_ratio) law["beta_over_beta_c"] = *beta_ratio;
    if (r_max) law["r_max"] = *r_max;
    if (!law.empty()) j["law"] = law;
    if (!out.empty()) j["output"] = out;
    if (!name.empty()) j["name"] = name;
    return j;
  }
};

int execute(const json& doc, const std::string& source, const hbrw::RunOptions& options = {}) {
  const auto cfg = hbrw::parse_config(doc.dump(), source);
  const auto res = hbrw::run(cfg, options);
  std::cout << res.summary << "\n" << "csv: " << res.csv.string() << "\n" << "meta: " << res.sidecar.string() << "\n";
  return res.exit_code;
}

json& section(json& doc, const std::string& name) {
  if (!doc.contains(name)) doc[name] = json::object();
  return doc[name];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-tailed branching random walks: kernels, spectra, moments, simulation, asymptotics"};
  app.set_version_flag("--version", hbrw::tool_version());
  app.require_subcommand(1);

  int code = 0;
  auto guarded = [&code](auto&& body) {
    return [&code, body] {
      try {
        code = body();
      } catch (const hbrw::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = 1;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = 1;
      }
    };
  };

  // run CONFIG
  std::string run_path;
  std::string run_out;
  std::optional<unsigned> run_threads;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Run the scenario of a config file (or of a metadata sidecar)");
  run->add_option("config", run_path, "Config file")->required();
  run->add_option("--out", run_out, "Output directory (overrides the config)");
  run->add_option("--threads", run_threads, "Worker threads (Monte Carlo)");
  run->add_option("--seed", run_seed, "Master seed (Monte Carlo)");
  run->callback(guarded([&] {
    hbrw::RunOptions o;
    if (!run_out.empty()) o.out_dir = run_out;
    o.threads = run_threads;
    o.seed = run_seed;
    const auto res = hbrw::run(hbrw::load_config(run_path), o);
    std::cout << res.summary << "\n" << "csv: " << res.csv.string() << "\n" << "meta: " << res.sidecar.string() << "\n";
    return res.exit_code;
  }));

  // kernel inspect
  auto* kernel = app.add_subcommand("kernel", "Kernel construction")->require_subcommand(1);
  ModelFlags kflags;
  auto* inspect = kernel->add_subcommand("inspect", "Tabulate a kernel and report a0, tail mass and residuals");
  kflags.attach(inspect, false);
  inspect->callback(guarded([&] {
    auto doc = kflags.document("kernel");
    doc.erase("law");
    return execute(doc, "kernel inspect");
  }));

  // spectral green | classify
  auto* spectral = app.add_subcommand("spectral", "Resolvent and regime classification")->require_subcommand(1);
  ModelFlags gflags;
  std::vector<double> lambdas;
  std::vector<std::string> gx;
  std::string gy;
  auto* green = spectral->add_subcommand("green", "G_lambda(x, y) by quadrature");
  gflags.attach(green, true);
  green->add_option("--lambda", lambdas, "Spectral parameter(s)")->required();
  green->add_option("--x", gx, "Site(s) x, e.g. 3 or 1,0")->take_all();
  green->add_option("--y", gy, "Site y (default origin)");
  green->callback(guarded([&] {
    auto doc = gflags.document("spectral");
    if (!doc.contains("law")) doc["law"] = {{"b", {{"2", 0.0}}}};
    auto& s = section(doc, "spectral");
    s["mode"] = "green";
    s["lambdas"] = lambdas;
    if (!gx.empty()) {
      s["x"] = json::array();
      for (const auto& x : gx) s["x"].push_back(parse_site_flag(x, "--x"));
    }
    if (!gy.empty()) s["y"] = parse_site_flag(gy, "--y");
    return execute(doc, "spectral green");
  }));

  ModelFlags cflags;
  std::vector<std::string> cx;
  std::optional<double> ctol;
  auto* cls = spectral->add_subcommand("classify", "Classify the regime; lambda_0 and c(lambda_0, x, y) when supercritical");
  cflags.attach(cls, true);
  cls->add_option("--x", cx, "Sites for c(lambda_0, x, y)")->take_all();
  cls->add_option("--tol", ctol, "Relative width of the critical band");
  cls->callback(guarded([&] {
    auto doc = cflags.document("spectral");
    auto& s = section(doc, "spectral");
    s["mode"] = "classify";
    s.erase("lambdas");
    if (!cx.empty()) {
      s["x"] = json::array();
      for (const auto& x : cx) s["x"].push_back(parse_site_flag(x, "--x"));
    }
    if (ctol) s["tol"] = *ctol;
    return execute(doc, "spectral classify");
  }));

  // moments solve
  auto* moments = app.add_subcommand("moments", "Moment equations")->require_subcommand(1);
  ModelFlags mflags;
  std::optional<int> mn;
  std::string mq;
  std::string mx, my;
  std::optional<double> mt;
  std::optional<int> mbox;
  std::optional<std::size_t> mpoints;
  bool mtrunc = false;
  auto* solve = moments->add_subcommand("solve", "m_n(t, x, y) and m_n(t, x) on a uniform grid");
  mflags.attach(solve, true);
  solve->add_option("--n", mn, "Highest moment order");
  solve->add_option("--quantity", mq, "local | total | both")->check(CLI::IsMember({"local", "total", "both"}));
  solve->add_option("--x", mx, "Start site x");
  solve->add_option("--y", my, "Target site y (local)");
  solve->add_option("--tmax", mt, "Horizon T");
  solve->add_option("--box", mbox, "Truncation radius R_L");
  solve->add_option("--points", mpoints, "Grid points on [0, T]");
  solve->add_flag("--truncation-diff", mtrunc, "Also solve on the doubled box and report the difference");
  solve->callback(guarded([&] {
    auto doc = mflags.document("moments");
    auto& s = section(doc, "moments");
    if (mn) s["n_max"] = *mn;
    if (!mq.empty()) s["quantities"] = mq == "both" ? json{"total", "local"} : json{mq};
    if (!mx.empty()) s["x"] = parse_site_flag(mx, "--x");
    if (!my.empty()) s["y"] = parse_site_flag(my, "--y");
    if (mt) s["t_max"] = *mt;
    if (mbox) s["box_radius"] = *mbox;
    if (mpoints) s["points"] = *mpoints;
    if (mtrunc) s["truncation_diff"] = true;
    return execute(doc, "moments solve");
  }));

  // simulate run
  auto* simulate = app.add_subcommand("simulate", "Event-driven Monte Carlo")->require_subcommand(1);
  ModelFlags sflags;
  std::optional<std::uint64_t> strials, sseed;
  std::optional<unsigned> sthreads;
  std::optional<double> st;
  auto* srun = simulate->add_subcommand("run", "Estimate moments of mu_t by simulation");
  sflags.attach(srun, true);
  srun->add_option("--trials", strials, "Number of trials");
  srun->add_option("--seed", sseed, "Master seed");
  srun->add_option("--threads", sthreads, "Worker threads");
  srun->add_option("--tmax", st, "Horizon T");
  srun->callback(guarded([&] {
    auto doc = sflags.document("simulate");
    auto& s = section(doc, "simulate");
    if (strials) s["trials"] = *strials;
    if (sseed) s["seed"] = *sseed;
    if (sthreads) s["threads"] = *sthreads;
    if (st) s["t_max"] = *st;
    return execute(doc, "simulate run");
  }));

  // verify regime
  auto* verify = app.add_subcommand("verify", "Compare moments with the asymptotic predictions")->require_subcommand(1);
  ModelFlags vflags;
  std::optional<int> vn;
  std::optional<unsigned> vthreads;
  std::optional<std::uint64_t> vseed;
  auto* regime = verify->add_subcommand("regime", "Fit the moment series and judge them against the predictions");
  vflags.attach(regime, true);
  regime->add_option("--n-max", vn, "Highest moment order");
  regime->add_option("--threads", vthreads, "Worker threads (Monte Carlo)");
  regime->add_option("--seed", vseed, "Master seed (Monte Carlo)");
  regime->callback(guarded([&] {
    auto doc = vflags.document("verify");
    auto& s = section(doc, "verify");
    if (vn) s["n_max"] = *vn;
    if (vthreads) s["threads"] = *vthreads;
    if (vseed) s["seed"] = *vseed;
    return execute(doc, "verify regime");
  }));

  // repro check A B
  auto* repro = app.add_subcommand("repro", "Reproducibility")->require_subcommand(1);
  std::string ra, rb;
  auto* check = repro->add_subcommand("check", "Compare the outputs recorded by two metadata sidecars");
  check->add_option("a", ra, "First sidecar")->required();
  check->add_option("b", rb, "Second sidecar")->required();
  check->callback(guarded([&] {
    const bool same = hbrw::repro_check(ra, rb);
    std::cout << (same ? "IDENTICAL" : "DIFFERENT") << "\n";
    return same ? 0 : 2;
  }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  return code;
}
