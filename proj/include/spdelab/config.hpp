#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"

namespace spdelab {

/// Configuration problem, carrying a message already anchored to a line of
/// the offending file where one can be determined.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One run description: which model and initial state, the grid, the
/// replicate budget with its probes, which checks to run at which
/// tolerances, and where to write artifacts.
struct RunConfig {
  // model block
  std::string kind = "fvp";           // "sbm" | "fvp" | "sheet"
  std::string preset = "gaussian-cdf";  // initial state: named preset or "file:<path>"
  std::vector<double> epsilons;
  double kappa = 0.25;
  double halfwidth = 2.0;  // sbm: mark interval is [-halfwidth, halfwidth]
  double sheet_q = 1.0;    // sheet: constant local noise intensity

  // grid block
  double L = 6.0;
  int nx = 128;
  double T = 0.5;
  int nt = 64;
  int na = 64;

  // ensemble block
  int replicates = 2000;
  std::uint64_t seed = 1;
  int threads = 0;
  std::vector<double> probes;  // locations, must be grid nodes; empty = default 5
  double probe_time = -1.0;    // < 0 means the final time

  // checks block
  std::vector<std::string> suites;  // which check suites a bare `check` runs
  double qv_tol = 0.05;
  double variance_tol = 0.10;
  double duality_tol = 0.02;
  double hit_delta = 1.0;

  // output block
  std::string out_dir = "out";
  bool write_fields = false;
};

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

inline int line_of_key(const std::string& text, const std::string& key) {
  std::size_t at = text.find("\"" + key + "\"");
  if (at == std::string::npos) return 0;
  return line_of_offset(text, at);
}

[[noreturn]] inline void config_fail(const std::string& text, const std::string& key,
                                     const std::string& what) {
  int line = line_of_key(text, key);
  std::ostringstream os;
  if (line > 0)
    os << "line " << line << ": ";
  os << what;
  throw ConfigError(os.str());
}

inline Field load_field_file(const std::string& path, int expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open initial-state file: " + path);
  Field f;
  std::string tok;
  while (std::getline(in, tok)) {
    if (tok.empty() || tok[0] == '#') continue;
    std::istringstream row(tok);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(std::stod(cell));
  }
  if (static_cast<int>(f.size()) != expected) {
    std::ostringstream os;
    os << "initial-state file " << path << " holds " << f.size() << " values, grid has "
       << expected << " nodes";
    throw ConfigError(os.str());
  }
  return f;
}

}  // namespace detail

/// Parse and validate a JSON run description. Malformed syntax and violated
/// invariants both raise ConfigError with the offending line where known.
inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::ostringstream os;
    os << "line " << detail::line_of_offset(text, e.byte) << ": " << e.what();
    throw ConfigError(os.str());
  }

  RunConfig c;
  auto fail = [&](const std::string& key, const std::string& what) {
    detail::config_fail(text, key, what);
  };
  auto get = [&](const nlohmann::json& blk, const char* key, auto& into) {
    if (!blk.contains(key)) return;
    try {
      into = blk.at(key).get<std::decay_t<decltype(into)>>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, std::string("bad value for \"") + key + "\": " + e.what());
    }
  };

  if (!j.is_object()) throw ConfigError("line 1: top level must be a JSON object");
  for (auto& [key, val] : j.items()) {
    if (key != "model" && key != "grid" && key != "ensemble" && key != "checks" &&
        key != "output")
      fail(key, "unknown block \"" + key + "\"");
    if (!val.is_object()) fail(key, "block \"" + key + "\" must be an object");
  }

  if (j.contains("model")) {
    const auto& b = j["model"];
    get(b, "kind", c.kind);
    get(b, "preset", c.preset);
    if (b.contains("epsilon")) {
      if (b["epsilon"].is_number())
        c.epsilons = {b["epsilon"].get<double>()};
      else
        get(b, "epsilon", c.epsilons);
    }
    get(b, "kappa", c.kappa);
    get(b, "halfwidth", c.halfwidth);
    get(b, "sheet_q", c.sheet_q);
  }
  if (j.contains("grid")) {
    const auto& b = j["grid"];
    get(b, "L", c.L);
    get(b, "nx", c.nx);
    get(b, "T", c.T);
    get(b, "nt", c.nt);
    get(b, "na", c.na);
  }
  if (j.contains("ensemble")) {
    const auto& b = j["ensemble"];
    get(b, "replicates", c.replicates);
    get(b, "seed", c.seed);
    get(b, "threads", c.threads);
    get(b, "probes", c.probes);
    get(b, "probe_time", c.probe_time);
  }
  if (j.contains("checks")) {
    const auto& b = j["checks"];
    get(b, "run", c.suites);
    get(b, "qv_tol", c.qv_tol);
    get(b, "variance_tol", c.variance_tol);
    get(b, "duality_tol", c.duality_tol);
    get(b, "hit_delta", c.hit_delta);
  }
  if (j.contains("output")) {
    const auto& b = j["output"];
    get(b, "dir", c.out_dir);
    get(b, "write_fields", c.write_fields);
  }

  if (c.kind != "sbm" && c.kind != "fvp" && c.kind != "sheet")
    fail("kind", "model kind must be \"sbm\", \"fvp\" or \"sheet\", got \"" + c.kind + "\"");
  if (c.epsilons.empty()) c.epsilons = {1e-3};
  for (double e : c.epsilons)
    if (!(e > 0.0)) fail("epsilon", "epsilon values must be strictly positive");
  if (!(c.kappa > 0.0 && c.kappa < 0.5))
    fail("kappa", "kappa must lie strictly between 0 and 1/2");
  if (!(c.L > 0.0) || !(c.T > 0.0)) fail("L", "grid extents L and T must be positive");
  if (c.nx < 4 || c.nt < 1 || c.na < 1) fail("nx", "grid sizes nx, nt, na are too small");
  if (!(c.halfwidth > 0.0)) fail("halfwidth", "halfwidth must be positive");
  if (c.replicates < 1) fail("replicates", "replicates must be at least 1");
  if (c.threads < 0) fail("threads", "threads must be nonnegative");
  for (double q : {c.qv_tol, c.variance_tol, c.duality_tol})
    if (!(q > 0.0)) fail("checks", "tolerances must be positive");

  Grid g = make_grid(c.L, c.nx, c.T, c.nt);
  for (double p : c.probes) {
    double idx = (p + c.L) / g.dx;
    if (p < -c.L || p > c.L || std::abs(idx - std::round(idx)) > 1e-9)
      fail("probes", "probes must sit on grid nodes");
  }
  if (c.probe_time > 0.0) {
    double kk = c.probe_time / g.dt;
    if (c.probe_time > c.T + 1e-12 || std::abs(kk - std::round(kk)) > 1e-9)
      fail("probe_time", "probe_time must be a grid time");
  }

  const bool named = c.preset == "lebesgue" || c.preset == "gaussian-cdf" ||
                     c.preset == "point-mass" || c.preset == "uniform01";
  const bool from_file = c.preset.rfind("file:", 0) == 0;
  if (c.kind != "sheet" && !named && !from_file)
    fail("preset", "unknown initial-state preset \"" + c.preset + "\"");
  if (c.kind == "fvp" && c.preset == "lebesgue")
    fail("preset", "the probability-valued model needs a probability initial state");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline Grid config_grid(const RunConfig& c) { return make_grid(c.L, c.nx, c.T, c.nt); }

inline InitialKind preset_initial(const std::string& preset) {
  if (preset == "lebesgue") return InitialKind::kLebesgue;
  if (preset == "gaussian-cdf") return InitialKind::kGaussian;
  if (preset == "point-mass") return InitialKind::kPointMass;
  if (preset == "uniform01") return InitialKind::kUniform01;
  return InitialKind::kCustomInit;
}

/// Instantiate the configured model at one noise level.
inline ModelSpec config_model(const RunConfig& c, double epsilon) {
  Grid g = config_grid(c);
  if (c.kind == "sheet") {
    double q = c.sheet_q;
    return make_sheet_model(g, [q](double) { return q; }, epsilon, c.kappa);
  }
  const bool from_file = c.preset.rfind("file:", 0) == 0;
  InitialKind init = from_file ? InitialKind::kGaussian : preset_initial(c.preset);
  ModelSpec m;
  if (c.kind == "sbm") {
    int per_unit = std::max(1, static_cast<int>(std::lround(c.na / (2.0 * c.halfwidth))));
    m = make_sbm_model(g, init, epsilon, c.kappa, c.halfwidth, per_unit);
  } else {
    m = make_fvp_model(g, init, epsilon, c.kappa, c.na);
  }
  if (from_file) {
    Field f = detail::load_field_file(c.preset.substr(5), g.num_nodes());
    for (std::size_t i = 1; i < f.size(); ++i)
      if (f[i] < f[i - 1]) throw ConfigError("initial-state file must be nondecreasing");
    if (c.kind == "fvp" && (f.front() < -1e-12 || f.back() > 1.0 + 1e-12))
      throw ConfigError("initial-state file must stay within [0, 1] for the probability model");
    m.F = f;
    m.initial = InitialKind::kCustomInit;
  }
  return m;
}

/// Default probe set: five interior nodes at the {1/6, 1/3, 1/2, 2/3, 5/6}
/// mass quantiles of the initial measure, or evenly spread when the initial
/// state carries no mass (sheet runs).
inline std::vector<double> default_probes(const RunConfig& c) {
  Grid g = config_grid(c);
  ModelSpec m = config_model(c, c.epsilons.front());
  const Field& u0 = m.F;
  double total = u0.back() - u0.front();
  std::vector<double> ps;
  if (total > 1e-12) {
    for (double q : {1.0 / 6.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0}) {
      double level = u0.front() + q * total;
      auto it = std::lower_bound(u0.begin(), u0.end(), level);
      int i = static_cast<int>(it - u0.begin());
      i = std::min(std::max(i, 1), g.nx - 1);
      ps.push_back(g.node(i));
    }
  } else {
    for (int k = 1; k <= 5; ++k) {
      int i = static_cast<int>(std::lround((k / 6.0) * g.nx));
      ps.push_back(g.node(std::min(std::max(i, 1), g.nx - 1)));
    }
  }
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  return ps;
}

}  // namespace spdelab
