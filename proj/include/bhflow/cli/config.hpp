#pragma once

// Experiment configuration: a YAML tree with a fixed schema. Unknown keys,
// wrong types and inconsistent dimensions are rejected before any
// computation, with file:line:column and the dotted field path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "bhflow/cli/io.hpp"
#include "bhflow/inverse.hpp"

namespace bhflow::cli {

struct GridConfig {
  int dim = 1;
  std::vector<Interval> extent;
  std::vector<int> cells;
};

struct BasisConfig {
  std::string family = "fourier";
  int size = 1;
  std::string file;
};

struct PathConfig {
  bool present = false;
  std::string generator = "fisher_rao";
  double horizon = 1.0;
  int nodes = 33;
  std::vector<double> a0, a1;
  std::vector<std::vector<double>> coeffs;
  std::string file;
};

struct ObservationConfig {
  bool present = false;
  KernelKind kernel = KernelKind::identity;
  double bandwidth = 0.0;
  std::string feature_family = "monomials";
  int feature_order = 2;
};

struct InverseConfig {
  double lambda = 1e-6;
  double mu = 0.0;
  double gamma = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  std::string data;
  OptimizerSettings optimizer;
  std::vector<double> lambdas = {1e-4, 1e-3, 1e-2};
  std::vector<double> sigmas = {1e-4, 1e-3, 1e-2};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct ForwardConfig {
  double continuity_threshold = 1e-4;
  int snapshots = 5;
};

struct VerifyConfig {
  int particles = 20000;
  int particle_steps = 128;
  double particle_ks = 0.02;
  int instances = 20;
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  std::filesystem::path source;
  std::filesystem::path base_dir;
  GridConfig grid;
  BasisConfig basis;
  PathConfig path;
  ObservationConfig observation;
  InverseConfig inverse;
  ForwardConfig forward;
  VerifyConfig verify;
  std::string flow_match_beta;
  double bounds_lo = 1e-3, bounds_hi = 1e3;
  double solver_tolerance = kDefaultSolverTolerance;
  std::string output = "out";
  int threads = 1;

  std::filesystem::path resolve(const std::string& file) const {
    const std::filesystem::path p(file);
    return p.is_absolute() ? p : base_dir / p;
  }
};

namespace detail {

class Schema {
 public:
  explicit Schema(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& msg) const {
    std::string loc = source_;
    if (at.IsDefined() && at.Mark().line >= 0)
      loc += ":" + std::to_string(at.Mark().line + 1) + ":" + std::to_string(at.Mark().column + 1);
    throw ConfigError(loc + ": " + field + ": " + msg);
  }

  void keys(const YAML::Node& map, const std::string& field, std::initializer_list<const char*> allowed) const {
    if (!map.IsMap()) fail(map, field, "expected a mapping");
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
        fail(kv.first, join(field, k), "unknown key");
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& field, const char* type) const {
    if (!n.IsScalar()) fail(n, field, std::string("expected ") + type);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, field, std::string("expected ") + type + ", got '" + n.Scalar() + "'");
    }
  }

  double number(const YAML::Node& n, const std::string& field) const {
    const double v = scalar<double>(n, field, "a number");
    if (!std::isfinite(v)) fail(n, field, "must be finite");
    return v;
  }
  double positive(const YAML::Node& n, const std::string& field) const {
    const double v = number(n, field);
    if (!(v > 0.0)) fail(n, field, "must be positive");
    return v;
  }
  double non_negative(const YAML::Node& n, const std::string& field) const {
    const double v = number(n, field);
    if (!(v >= 0.0)) fail(n, field, "must be non-negative");
    return v;
  }
  int integer(const YAML::Node& n, const std::string& field, int min) const {
    const int v = scalar<int>(n, field, "an integer");
    if (v < min) fail(n, field, "must be at least " + std::to_string(min));
    return v;
  }
  std::uint64_t seed(const YAML::Node& n, const std::string& field) const {
    return scalar<std::uint64_t>(n, field, "a non-negative integer");
  }
  std::string text(const YAML::Node& n, const std::string& field) const {
    return scalar<std::string>(n, field, "a string");
  }
  bool boolean(const YAML::Node& n, const std::string& field) const { return scalar<bool>(n, field, "true or false"); }

  std::vector<double> numbers(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence()) fail(n, field, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(number(n[i], field + "[" + std::to_string(i) + "]"));
    return out;
  }

  static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

 private:
  std::string source_;
};

/// Parses `name(arg)` or bare `name`.
inline bool parse_call(const std::string& s, std::string& name, std::string& arg) {
  static const std::regex re(R"(^\s*([A-Za-z_]+)\s*(?:\(\s*([^()]*?)\s*\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return false;
  name = m[1];
  arg = m[2];
  return true;
}

inline void parse_grid(const Schema& S, const YAML::Node& n, GridConfig& g) {
  S.keys(n, "grid", {"dim", "extent", "cells"});
  if (n["dim"]) g.dim = S.integer(n["dim"], "grid.dim", 1);
  if (g.dim != 1 && g.dim != 2) S.fail(n["dim"], "grid.dim", "must be 1 or 2");
  g.extent.clear();
  if (n["extent"]) {
    const YAML::Node e = n["extent"];
    if (!e.IsSequence() || static_cast<int>(e.size()) != g.dim)
      S.fail(e, "grid.extent", "expected one [lo, hi] pair per axis");
    for (int a = 0; a < g.dim; ++a) {
      const std::string f = "grid.extent[" + std::to_string(a) + "]";
      const std::vector<double> iv = S.numbers(e[a], f);
      if (iv.size() != 2 || !(iv[0] < iv[1])) S.fail(e[a], f, "expected [lo, hi] with lo < hi");
      g.extent.push_back({iv[0], iv[1]});
    }
  } else {
    g.extent.assign(g.dim, Interval{0.0, 1.0});
  }
  if (!n["cells"]) S.fail(n, "grid.cells", "required key is missing");
  const YAML::Node c = n["cells"];
  g.cells.clear();
  if (c.IsScalar()) {
    g.cells.assign(g.dim, S.integer(c, "grid.cells", 4));
  } else {
    if (!c.IsSequence() || static_cast<int>(c.size()) != g.dim) S.fail(c, "grid.cells", "expected one count per axis");
    for (int a = 0; a < g.dim; ++a) g.cells.push_back(S.integer(c[a], "grid.cells[" + std::to_string(a) + "]", 4));
  }
}

inline void parse_basis(const Schema& S, const YAML::Node& n, BasisConfig& b) {
  S.keys(n, "basis", {"family", "size", "file"});
  if (n["family"]) b.family = S.text(n["family"], "basis.family");
  if (b.family != "fourier" && b.family != "legendre" && b.family != "custom")
    S.fail(n["family"], "basis.family", "expected fourier, legendre or custom");
  if (n["size"]) b.size = S.integer(n["size"], "basis.size", 1);
  if (n["file"]) b.file = S.text(n["file"], "basis.file");
  if (b.family == "custom" && b.file.empty()) S.fail(n, "basis.file", "required for the custom family");
}

inline void parse_path(const Schema& S, const YAML::Node& n, PathConfig& p) {
  S.keys(n, "path", {"generator", "T", "nodes", "a0", "a1", "coeffs", "file"});
  p.present = true;
  if (n["generator"]) p.generator = S.text(n["generator"], "path.generator");
  if (p.generator != "fisher_rao" && p.generator != "polynomial" && p.generator != "table")
    S.fail(n["generator"], "path.generator", "expected fisher_rao, polynomial or table");
  if (n["T"]) p.horizon = S.positive(n["T"], "path.T");
  if (n["nodes"]) p.nodes = S.integer(n["nodes"], "path.nodes", 3);
  if (p.generator == "fisher_rao") {
    if (!n["a0"] || !n["a1"]) S.fail(n, "path", "fisher_rao needs a0 and a1");
    p.a0 = S.numbers(n["a0"], "path.a0");
    p.a1 = S.numbers(n["a1"], "path.a1");
    if (p.a0.size() != p.a1.size()) S.fail(n["a1"], "path.a1", "length differs from path.a0");
  } else if (p.generator == "polynomial") {
    if (!n["coeffs"] || !n["coeffs"].IsSequence() || n["coeffs"].size() == 0)
      S.fail(n, "path.coeffs", "polynomial needs a non-empty list of coefficient rows");
    for (std::size_t r = 0; r < n["coeffs"].size(); ++r) {
      p.coeffs.push_back(S.numbers(n["coeffs"][r], "path.coeffs[" + std::to_string(r) + "]"));
      if (p.coeffs.back().size() != p.coeffs.front().size())
        S.fail(n["coeffs"][r], "path.coeffs[" + std::to_string(r) + "]", "rows must have equal length");
    }
  } else {
    if (!n["file"]) S.fail(n, "path.file", "table generator needs a file");
    p.file = S.text(n["file"], "path.file");
  }
}

inline void parse_observation(const Schema& S, const YAML::Node& n, ObservationConfig& o) {
  S.keys(n, "observation", {"kernel", "features"});
  o.present = true;
  std::string name, arg;
  if (n["kernel"]) {
    const std::string k = S.text(n["kernel"], "observation.kernel");
    if (!parse_call(k, name, arg)) S.fail(n["kernel"], "observation.kernel", "cannot parse '" + k + "'");
    if (name == "identity" && arg.empty()) {
      o.kernel = KernelKind::identity;
    } else if (name == "gaussian") {
      o.kernel = KernelKind::gaussian;
      try {
        o.bandwidth = std::stod(arg);
      } catch (const std::exception&) {
        o.bandwidth = -1.0;
      }
      if (!(o.bandwidth > 0.0)) S.fail(n["kernel"], "observation.kernel", "gaussian(sigma) needs sigma > 0");
    } else {
      S.fail(n["kernel"], "observation.kernel", "expected identity or gaussian(sigma)");
    }
  }
  if (n["features"]) {
    const std::string f = S.text(n["features"], "observation.features");
    if (!parse_call(f, name, arg) || (name != "monomials" && name != "fourier_features"))
      S.fail(n["features"], "observation.features", "expected monomials(p) or fourier_features(q)");
    int order = 0;
    try {
      order = std::stoi(arg);
    } catch (const std::exception&) {
      order = 0;
    }
    if (order < 1) S.fail(n["features"], "observation.features", "order must be a positive integer");
    o.feature_family = name;
    o.feature_order = order;
  }
}

inline void parse_inverse(const Schema& S, const YAML::Node& n, InverseConfig& c) {
  S.keys(n, "inverse",
         {"lambda", "mu", "gamma", "noise_sigma", "seed", "data", "optimizer", "lambdas", "sigmas", "seeds"});
  if (n["lambda"]) c.lambda = S.positive(n["lambda"], "inverse.lambda");
  if (n["mu"]) c.mu = S.non_negative(n["mu"], "inverse.mu");
  if (n["gamma"]) c.gamma = S.non_negative(n["gamma"], "inverse.gamma");
  if (n["noise_sigma"]) c.noise_sigma = S.non_negative(n["noise_sigma"], "inverse.noise_sigma");
  if (n["seed"]) c.seed = S.seed(n["seed"], "inverse.seed");
  if (n["data"]) c.data = S.text(n["data"], "inverse.data");
  if (n["lambdas"]) {
    c.lambdas = S.numbers(n["lambdas"], "inverse.lambdas");
    for (double l : c.lambdas)
      if (!(l > 0.0)) S.fail(n["lambdas"], "inverse.lambdas", "values must be positive");
  }
  if (n["sigmas"]) {
    c.sigmas = S.numbers(n["sigmas"], "inverse.sigmas");
    for (double s : c.sigmas)
      if (!(s >= 0.0)) S.fail(n["sigmas"], "inverse.sigmas", "values must be non-negative");
  }
  if (n["seeds"]) {
    const YAML::Node s = n["seeds"];
    if (!s.IsSequence() || s.size() == 0) S.fail(s, "inverse.seeds", "expected a non-empty list of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) c.seeds.push_back(S.seed(s[i], "inverse.seeds[" + std::to_string(i) + "]"));
  }
  if (n["optimizer"]) {
    const YAML::Node o = n["optimizer"];
    const std::string f = "inverse.optimizer";
    S.keys(o, f,
           {"max_iterations", "gradient_tolerance", "step_tolerance", "objective_tolerance", "armijo", "backtrack",
            "max_backtracks", "gauss_newton", "damping", "solver_tolerance"});
    OptimizerSettings& s = c.optimizer;
    if (o["max_iterations"]) s.max_iterations = S.integer(o["max_iterations"], f + ".max_iterations", 0);
    if (o["gradient_tolerance"]) s.gradient_tolerance = S.non_negative(o["gradient_tolerance"], f + ".gradient_tolerance");
    if (o["step_tolerance"]) s.step_tolerance = S.non_negative(o["step_tolerance"], f + ".step_tolerance");
    if (o["objective_tolerance"])
      s.objective_tolerance = S.non_negative(o["objective_tolerance"], f + ".objective_tolerance");
    if (o["armijo"]) s.armijo = S.positive(o["armijo"], f + ".armijo");
    if (o["backtrack"]) s.backtrack = S.positive(o["backtrack"], f + ".backtrack");
    if (s.backtrack >= 1.0) S.fail(o["backtrack"], f + ".backtrack", "must be below 1");
    if (o["max_backtracks"]) s.max_backtracks = S.integer(o["max_backtracks"], f + ".max_backtracks", 1);
    if (o["gauss_newton"]) s.gauss_newton = S.boolean(o["gauss_newton"], f + ".gauss_newton");
    if (o["damping"]) s.damping = S.non_negative(o["damping"], f + ".damping");
    if (o["solver_tolerance"]) s.solver_tolerance = S.positive(o["solver_tolerance"], f + ".solver_tolerance");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source) {
  ExperimentConfig cfg;
  cfg.source = source;
  cfg.base_dir = source.has_parent_path() ? source.parent_path() : std::filesystem::path(".");
  const detail::Schema S(source.string());
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source.string() + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source.string() + ": top level must be a mapping");
  S.keys(root, "",
         {"grid", "basis", "path", "observation", "inverse", "forward", "flow_match", "verify", "bounds", "solver",
          "output", "threads"});
  if (!root["grid"]) throw ConfigError(source.string() + ": grid: required block is missing");
  detail::parse_grid(S, root["grid"], cfg.grid);
  if (!root["basis"]) throw ConfigError(source.string() + ": basis: required block is missing");
  detail::parse_basis(S, root["basis"], cfg.basis);
  if (root["path"]) detail::parse_path(S, root["path"], cfg.path);
  if (root["observation"]) detail::parse_observation(S, root["observation"], cfg.observation);
  if (root["inverse"]) detail::parse_inverse(S, root["inverse"], cfg.inverse);
  if (const YAML::Node f = root["forward"]) {
    S.keys(f, "forward", {"continuity_threshold", "snapshots"});
    if (f["continuity_threshold"])
      cfg.forward.continuity_threshold = S.positive(f["continuity_threshold"], "forward.continuity_threshold");
    if (f["snapshots"]) cfg.forward.snapshots = S.integer(f["snapshots"], "forward.snapshots", 1);
  }
  if (const YAML::Node f = root["flow_match"]) {
    S.keys(f, "flow_match", {"beta"});
    if (f["beta"]) cfg.flow_match_beta = S.text(f["beta"], "flow_match.beta");
  }
  if (const YAML::Node v = root["verify"]) {
    S.keys(v, "verify", {"particles", "particle_steps", "particle_ks", "instances", "seed"});
    if (v["particles"]) cfg.verify.particles = S.integer(v["particles"], "verify.particles", 1);
    if (v["particle_steps"]) cfg.verify.particle_steps = S.integer(v["particle_steps"], "verify.particle_steps", 1);
    if (v["particle_ks"]) cfg.verify.particle_ks = S.positive(v["particle_ks"], "verify.particle_ks");
    if (v["instances"]) cfg.verify.instances = S.integer(v["instances"], "verify.instances", 1);
    if (v["seed"]) cfg.verify.seed = S.seed(v["seed"], "verify.seed");
  }
  if (const YAML::Node b = root["bounds"]) {
    const std::vector<double> v = S.numbers(b, "bounds");
    if (v.size() != 2 || !(v[0] > 0.0 && v[0] < v[1])) S.fail(b, "bounds", "expected [c_lo, c_hi] with 0 < c_lo < c_hi");
    cfg.bounds_lo = v[0];
    cfg.bounds_hi = v[1];
  }
  if (const YAML::Node s = root["solver"]) {
    S.keys(s, "solver", {"tolerance"});
    if (s["tolerance"]) cfg.solver_tolerance = S.positive(s["tolerance"], "solver.tolerance");
  }
  if (root["output"]) cfg.output = S.text(root["output"], "output");
  if (root["threads"]) cfg.threads = S.integer(root["threads"], "threads", 1);

  if (cfg.path.present) {
    if (cfg.path.generator == "fisher_rao" && static_cast<int>(cfg.path.a0.size()) != cfg.basis.size)
      S.fail(root["path"]["a0"], "path.a0", "length must equal basis.size (" + std::to_string(cfg.basis.size) + ")");
    if (cfg.path.generator == "polynomial" && static_cast<int>(cfg.path.coeffs.front().size()) != cfg.basis.size)
      S.fail(root["path"]["coeffs"], "path.coeffs", "row length must equal basis.size");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file);
}

/// Runtime objects built from a validated config.
struct Experiment {
  ExperimentConfig config;
  Grid grid;
  Basis basis;
  std::optional<CoefficientPath> path;
  std::optional<ObservationModel> model;
  AdmissibleBounds bounds;
};

inline Grid make_grid(const GridConfig& g) {
  return g.dim == 1 ? Grid::line(g.extent[0], g.cells[0])
                    : Grid::rectangle(g.extent[0], g.extent[1], g.cells[0], g.cells[1]);
}

inline Basis make_config_basis(const ExperimentConfig& cfg, const Grid& g) {
  const BasisConfig& b = cfg.basis;
  try {
    if (b.family == "fourier") return fourier_basis(g, b.size);
    if (b.family == "legendre") return legendre_basis(g, b.size);
    const std::filesystem::path file = cfg.resolve(b.file);
    const Table t = read_csv(file);
    if (t.columns() != b.size)
      throw ConfigError(file.string() + ": expected " + std::to_string(b.size) + " columns (basis.size)");
    if (static_cast<int>(t.rows.size()) != g.size())
      throw ConfigError(file.string() + ": expected one row per grid cell (" + std::to_string(g.size()) + ")");
    std::vector<ScalarField> fs(b.size, ScalarField(g.size()));
    for (int c = 0; c < g.size(); ++c)
      for (int k = 0; k < b.size; ++k) fs[k][c] = t.rows[c][k];
    return make_basis(g, std::move(fs), BasisFamily::custom);
  } catch (const InputError& e) {
    throw ConfigError(cfg.source.string() + ": basis: " + e.what());
  }
}

/// Path from the config; `refine` > 1 multiplies the interval count (used
/// by refinement studies, not available for tables).
inline CoefficientPath make_config_path(const ExperimentConfig& cfg, int refine = 1) {
  const PathConfig& p = cfg.path;
  const int nodes = (p.nodes - 1) * refine + 1;
  if (p.generator == "fisher_rao")
    return CoefficientPath::linear(Eigen::Map<const Eigen::VectorXd>(p.a0.data(), p.a0.size()),
                                   Eigen::Map<const Eigen::VectorXd>(p.a1.data(), p.a1.size()), nodes, p.horizon);
  if (p.generator == "polynomial") {
    Eigen::MatrixXd powers(p.coeffs.size(), p.coeffs.front().size());
    for (std::size_t r = 0; r < p.coeffs.size(); ++r)
      for (std::size_t c = 0; c < p.coeffs[r].size(); ++c) powers(r, c) = p.coeffs[r][c];
    return CoefficientPath::polynomial(powers, nodes, p.horizon);
  }
  if (refine != 1) throw InputError("path: table paths cannot be refined");
  const std::filesystem::path file = cfg.resolve(p.file);
  const Table t = read_csv(file);
  if (t.columns() != cfg.basis.size + 1)
    throw ConfigError(file.string() + ": expected columns t, a_1..a_" + std::to_string(cfg.basis.size));
  if (t.rows.size() < 3) throw ConfigError(file.string() + ": at least 3 time nodes required");
  const int n = static_cast<int>(t.rows.size());
  const double T = t.rows.back()[0];
  if (std::abs(t.rows.front()[0]) > 1e-12 || !(T > 0.0)) throw ConfigError(file.string() + ": times must run from 0 to T > 0");
  Eigen::MatrixXd c(n, cfg.basis.size);
  for (int i = 0; i < n; ++i) {
    if (std::abs(t.rows[i][0] - T * i / (n - 1)) > 1e-9 * T)
      throw ConfigError(file.string() + ": line " + std::to_string(i + 2) + ": time nodes must be uniform");
    for (int k = 0; k < cfg.basis.size; ++k) c(i, k) = t.rows[i][k + 1];
  }
  return {T, c};
}

inline ObservationModel make_config_model(const ExperimentConfig& cfg, const Grid& g) {
  const ObservationConfig& o = cfg.observation;
  std::vector<ScalarField> features = o.feature_family == "monomials" ? monomial_features(g, o.feature_order)
                                                                      : fourier_features(g, o.feature_order);
  return make_observation_model(g, std::move(features), o.kernel, o.bandwidth);
}

inline Experiment build_experiment(const ExperimentConfig& cfg) {
  const Grid g = make_grid(cfg.grid);
  Experiment ex{cfg, g, make_config_basis(cfg, g), std::nullopt, std::nullopt, AdmissibleBounds(cfg.bounds_lo, cfg.bounds_hi)};
  if (cfg.path.present) {
    try {
      ex.path = make_config_path(cfg);
    } catch (const InputError& e) {
      throw ConfigError(cfg.source.string() + ": path: " + e.what());
    }
    const PathAdmissibility adm = check_path(ex.grid, ex.basis, *ex.path, ex.bounds);
    if (!adm.admissible)
      throw ConfigError(cfg.source.string() + ": path: state at node " + std::to_string(adm.offending_node) +
                        " violates the admissible bounds (density range " + format_number(adm.min_density) + " .. " +
                        format_number(adm.max_density) + ")");
  }
  if (cfg.observation.present) ex.model = make_config_model(cfg, ex.grid);
  return ex;
}

}  // namespace bhflow::cli
