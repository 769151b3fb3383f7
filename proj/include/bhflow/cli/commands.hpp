#pragma once

// The workflows behind the bhflow subcommands. Each reads a built
// Experiment, writes its artifacts into `out`, and returns the exit code.

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "bhflow/cli/verify.hpp"

namespace bhflow::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kConfig = 1, kSolver = 2, kIo = 3, kVerifyFailed = 4 };

namespace detail {

inline const CoefficientPath& require_path(const Experiment& ex, const char* command) {
  if (!ex.path) throw ConfigError(ex.config.source.string() + ": path: required block is missing for " + command);
  return *ex.path;
}

inline const ObservationModel& require_model(const Experiment& ex, const char* command) {
  if (!ex.model)
    throw ConfigError(ex.config.source.string() + ": observation: required block is missing for " + command);
  return *ex.model;
}

inline std::vector<std::string> numbered(const std::string& prefix, int n, int first = 1) {
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) out.push_back(prefix + std::to_string(k + first));
  return out;
}

/// Header `t,<prefix>1..` with one row per node.
inline Table node_table(const std::string& prefix, const Eigen::MatrixXd& values, double dt) {
  Table t;
  t.header = {"t"};
  for (const auto& h : numbered(prefix, static_cast<int>(values.cols()))) t.header.push_back(h);
  for (int i = 0; i < values.rows(); ++i) {
    std::vector<double> row{i * dt};
    for (int k = 0; k < values.cols(); ++k) row.push_back(values(i, k));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Json grid_json(const Grid& g) {
  Json j;
  j["dim"] = g.dim();
  Json cells = Json::array(), extent = Json::array();
  for (int a = 0; a < g.dim(); ++a) {
    cells.push_back(g.cells(a));
    extent.push_back({g.extent(a).lo, g.extent(a).hi});
  }
  j["cells"] = cells;
  j["extent"] = extent;
  return j;
}

/// Per-cell x-marginal of a density (the density itself in 1D).
inline std::vector<double> x_marginal(const Grid& g, const ScalarField& w) {
  std::vector<double> out(g.cells(0), 0.0);
  for (int c = 0; c < g.size(); ++c) out[g.index_x(c)] += w[c] / g.cells(1);
  return out;
}

inline std::vector<double> x_centers(const Grid& g) {
  std::vector<double> out(g.cells(0));
  for (int i = 0; i < g.cells(0); ++i) out[i] = g.center(0, g.cell(i, 0));
  return out;
}

inline InverseProblem make_problem(const Experiment& ex, const char* command) {
  const ExperimentConfig& cfg = ex.config;
  const ObservationModel& model = require_model(ex, command);
  InverseProblem p(ex.grid, ex.basis, model, ex.path ? ex.path->horizon : cfg.path.horizon);
  p.lambda = cfg.inverse.lambda;
  p.mu = cfg.inverse.mu;
  p.gamma = cfg.inverse.gamma;
  p.bounds = ex.bounds;
  p.settings = cfg.inverse.optimizer;
  p.settings.solver_tolerance = std::min(p.settings.solver_tolerance, cfg.solver_tolerance);

  if (!cfg.inverse.data.empty()) {
    const fs::path file = cfg.resolve(cfg.inverse.data);
    const Table t = read_csv(file);
    if (t.columns() != model.dimension() + 1)
      throw ConfigError(file.string() + ": expected columns t, d_1..d_" + std::to_string(model.dimension()));
    const int n = static_cast<int>(t.rows.size());
    if (n < 3) throw ConfigError(file.string() + ": at least 3 time nodes required");
    const double T = t.rows.back()[0];
    if (std::abs(t.rows.front()[0]) > 1e-12 || !(T > 0.0))
      throw ConfigError(file.string() + ": times must run from 0 to T > 0");
    p.horizon = T;
    p.data.resize(n, model.dimension());
    for (int i = 0; i < n; ++i) {
      if (std::abs(t.rows[i][0] - T * i / (n - 1)) > 1e-9 * T)
        throw ConfigError(file.string() + ": line " + std::to_string(i + 2) + ": time nodes must be uniform");
      for (int j = 0; j < model.dimension(); ++j) p.data(i, j) = t.rows[i][j + 1];
    }
  } else {
    const CoefficientPath& truth = require_path(ex, command);
    p.data = make_synthetic(p, truth, cfg.inverse.noise_sigma, cfg.inverse.seed);
  }
  p.validate();
  return p;
}

/// The config path serves as truth when its sampling matches the data.
inline const CoefficientPath* truth_for(const Experiment& ex, const InverseProblem& p) {
  if (!ex.path || ex.path->nodes() != p.nodes() || std::abs(ex.path->horizon - p.horizon) > 1e-12 * p.horizon)
    return nullptr;
  return &*ex.path;
}

inline Json breakdown_json(const ObjectiveBreakdown& b) {
  Json j;
  j["data"] = json_number(b.data);
  j["transport"] = json_number(b.transport);
  j["mu"] = json_number(b.mu);
  j["gamma"] = json_number(b.gamma);
  j["total"] = json_number(b.total);
  j["admissible"] = b.admissible;
  return j;
}

}  // namespace detail

inline int cmd_forward(const Experiment& ex, const fs::path& out) {
  const Grid& g = ex.grid;
  const Basis& b = ex.basis;
  const CoefficientPath& path = detail::require_path(ex, "forward");
  const double tol = ex.config.solver_tolerance;
  const int n = path.nodes(), m = b.size();
  const Eigen::MatrixXd rates = path.rates();

  std::vector<CoordState> states(n);
  std::vector<ScalarField> hdots(n);
  std::vector<FaceField> velocities(n);
  std::vector<double> energy(n), h_min(n), w_min(n), w_max(n);
  parallel_for(n, [&](int i) {
    states[i] = state_of(g, b, path.at(i));
    hdots[i] = b.combine(rates.row(i).transpose());
    const ReducedState rs = reduced_state(g, b, path.at(i), tol);
    velocities[i] = reduced_velocity(g, rs, rates.row(i).transpose());
    energy[i] = rho_face_inner(g, states[i], velocities[i], velocities[i]);
    h_min[i] = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(kinetic_matrix(g, rs)).eigenvalues().minCoeff();
    w_min[i] = states[i].w.minCoeff();
    w_max[i] = states[i].w.maxCoeff();
  });
  const auto tests = default_test_battery(g);
  const auto residuals = continuity_residuals(g, states, hdots, path.dt(), tests, tol);
  double worst = 0.0;
  for (const auto& row : residuals)
    for (double r : row) worst = std::max(worst, std::abs(r));
  const double action = trapezoid(energy, path.dt());

  ensure_directory(out);
  {
    Table t;
    t.header = {"cell", "x"};
    if (g.dim() == 2) t.header.push_back("y");
    for (const auto& h : detail::numbered("w_", n, 0)) t.header.push_back(h);
    for (int c = 0; c < g.size(); ++c) {
      std::vector<double> row{static_cast<double>(c), g.center(0, c)};
      if (g.dim() == 2) row.push_back(g.center(1, c));
      for (int i = 0; i < n; ++i) row.push_back(states[i].w[c]);
      t.rows.push_back(std::move(row));
    }
    write_csv(out / "densities.csv", t);
  }
  {
    Table t;
    t.header = {"node", "t", "axis", "face", "x", "y", "v"};
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < g.dim(); ++a) {
        const int nx = g.cells(0) + (a == 0 ? 1 : 0);
        for (int f = 0; f < g.face_count(a); ++f) {
          const int fi = f % nx, fj = f / nx;
          const double x = g.extent(0).lo + (a == 0 ? fi : fi + 0.5) * g.spacing(0);
          const double y = g.dim() == 2 ? g.extent(1).lo + (a == 1 ? fj : fj + 0.5) * g.spacing(1) : 0.0;
          t.rows.push_back({static_cast<double>(i), path.time(i), static_cast<double>(a), static_cast<double>(f), x,
                            y, velocities[i][a][f]});
        }
      }
    write_csv(out / "velocities.csv", t);
  }
  {
    Table t;
    t.header = {"node", "t", "kinetic_energy", "h_min_eigenvalue", "min_density", "max_density"};
    for (int i = 0; i < n; ++i)
      t.rows.push_back({static_cast<double>(i), path.time(i), energy[i], h_min[i], w_min[i], w_max[i]});
    write_csv(out / "energies.csv", t);
  }
  {
    Table t;
    t.header = {"node", "t"};
    for (const auto& h : detail::numbered("test_", static_cast<int>(tests.size()), 0)) t.header.push_back(h);
    for (std::size_t r = 0; r < residuals.size(); ++r) {
      std::vector<double> row{static_cast<double>(r + 1), path.time(static_cast<int>(r) + 1)};
      row.insert(row.end(), residuals[r].begin(), residuals[r].end());
      t.rows.push_back(std::move(row));
    }
    write_csv(out / "continuity.csv", t);
  }
  write_csv(out / "path.csv", detail::node_table("a_", path.coeffs, path.dt()));
  write_csv(out / "rates.csv", detail::node_table("adot_", rates, path.dt()));

  Json s;
  s["command"] = "forward";
  s["grid"] = detail::grid_json(g);
  s["basis"] = {{"family", to_string(b.family)}, {"size", m}};
  s["nodes"] = n;
  s["horizon"] = path.horizon;
  s["action"] = json_number(action);
  s["max_kinetic_energy"] = json_number(*std::max_element(energy.begin(), energy.end()));
  s["min_h_eigenvalue"] = json_number(*std::min_element(h_min.begin(), h_min.end()));
  s["min_density"] = json_number(*std::min_element(w_min.begin(), w_min.end()));
  s["max_density"] = json_number(*std::max_element(w_max.begin(), w_max.end()));
  s["max_continuity_residual"] = json_number(worst);
  s["continuity_threshold"] = ex.config.forward.continuity_threshold;
  s["continuity_pass"] = worst < ex.config.forward.continuity_threshold;
  write_json(out / "summary.json", s);

  std::vector<Series> snaps;
  const int k = std::min(ex.config.forward.snapshots, n);
  for (int j = 0; j < k; ++j) {
    const int i = k == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(j) * (n - 1) / (k - 1)));
    snaps.push_back({"t = " + format_number(path.time(i)), detail::x_centers(g), detail::x_marginal(g, states[i].w)});
  }
  write_text(out / "density.svg", render_svg("Density snapshots", "x", "density", snaps));
  std::vector<double> times(n);
  for (int i = 0; i < n; ++i) times[i] = path.time(i);
  write_text(out / "energy.svg", render_svg("Kinetic energy", "t", "energy", {{"", times, energy}}));
  return kOk;
}

/// beta comes from a CSV with columns t, beta_1..beta_m and one row per node.
inline int cmd_flow_match(const Experiment& ex, const fs::path& beta_file, const fs::path& out) {
  const CoefficientPath& path = detail::require_path(ex, "flow-match");
  if (beta_file.empty())
    throw ConfigError(ex.config.source.string() + ": flow_match.beta: no candidate given (use --beta or flow_match.beta)");
  const Table t = read_csv(beta_file);
  if (t.columns() != path.dim() + 1)
    throw ConfigError(beta_file.string() + ": expected columns t, beta_1..beta_" + std::to_string(path.dim()));
  if (static_cast<int>(t.rows.size()) != path.nodes())
    throw ConfigError(beta_file.string() + ": " + std::to_string(t.rows.size()) + " rows but the path has " +
                      std::to_string(path.nodes()) + " nodes");
  Eigen::MatrixXd beta(path.nodes(), path.dim());
  for (int i = 0; i < path.nodes(); ++i) {
    if (std::abs(t.rows[i][0] - path.time(i)) > 1e-9 * path.horizon)
      throw ConfigError(beta_file.string() + ": line " + std::to_string(i + 2) + ": time does not match path node " +
                        std::to_string(i));
    for (int k = 0; k < path.dim(); ++k) beta(i, k) = t.rows[i][k + 1];
  }
  const double tol = ex.config.solver_tolerance;
  std::vector<double> pointwise;
  const double total = reduced_flow_match_loss(ex.grid, ex.basis, path, beta, tol, &pointwise);
  const double action =
      reduced_flow_match_loss(ex.grid, ex.basis, path, Eigen::MatrixXd::Zero(path.nodes(), path.dim()), tol);

  ensure_directory(out);
  Table lt;
  lt.header = {"node", "t", "loss"};
  std::vector<double> times(path.nodes());
  for (int i = 0; i < path.nodes(); ++i) {
    times[i] = path.time(i);
    lt.rows.push_back({static_cast<double>(i), times[i], pointwise[i]});
  }
  write_csv(out / "flow_match.csv", lt);
  Json j;
  j["command"] = "flow-match";
  j["beta"] = beta_file.string();
  j["nodes"] = path.nodes();
  j["total"] = json_number(total);
  j["action"] = json_number(action);
  write_json(out / "flow_match.json", j);
  write_text(out / "flow_match.svg", render_svg("Flow-matching loss", "t", "loss", {{"", times, pointwise}}));
  return kOk;
}

inline int cmd_invert(const Experiment& ex, const fs::path& out) {
  const InverseProblem p = detail::make_problem(ex, "invert");
  const CoefficientPath* truth = detail::truth_for(ex, p);
  const RecoveryReport rep = truth ? solve_inverse(p, default_initial_path(p), *truth) : solve_inverse(p);

  ensure_directory(out);
  write_csv(out / "recovered_path.csv", detail::node_table("a_", rep.path.coeffs, p.dt()));
  write_csv(out / "data.csv", detail::node_table("d_", p.data, p.dt()));

  Json j;
  j["command"] = "invert";
  j["nodes"] = p.nodes();
  j["horizon"] = p.horizon;
  j["lambda"] = p.lambda;
  j["mu"] = p.mu;
  j["gamma"] = p.gamma;
  j["noise_sigma"] = ex.config.inverse.data.empty() ? json_number(ex.config.inverse.noise_sigma) : Json(nullptr);
  j["termination"] = rep.termination;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["gradient_norm"] = json_number(rep.gradient_norm);
  j["objective"] = detail::breakdown_json(rep.breakdown);
  j["kappa_min"] = json_number(rep.kappa_min);
  j["observable"] = rep.observable;
  Json hist = Json::array();
  for (double v : rep.history) hist.push_back(json_number(v));
  j["history"] = hist;
  if (rep.errors) {
    const RecoveryErrors& e = *rep.errors;
    j["errors"] = {{"coefficient_sup", json_number(e.coefficient_sup)}, {"coefficient_l2", json_number(e.coefficient_l2)},
                   {"law_sup", json_number(e.law_sup)},                 {"law_l2", json_number(e.law_l2)},
                   {"score_sup", json_number(e.score_sup)},             {"velocity_l2sq", json_number(e.velocity_l2sq)},
                   {"truth_kappa_min", json_number(e.truth_kappa_min)}};
  } else {
    j["errors"] = nullptr;
  }
  write_json(out / "report.json", j);

  std::vector<double> it(rep.history.size()), logf(rep.history.size());
  for (std::size_t k = 0; k < rep.history.size(); ++k) {
    it[k] = static_cast<double>(k);
    logf[k] = std::log10(std::max(rep.history[k], 1e-300));
  }
  write_text(out / "convergence.svg", render_svg("Objective", "iteration", "log10 J", {{"", it, logf}}));
  std::vector<Series> cs;
  std::vector<double> times(p.nodes());
  for (int i = 0; i < p.nodes(); ++i) times[i] = i * p.dt();
  for (int k = 0; k < p.dim(); ++k) {
    std::vector<double> y(p.nodes());
    for (int i = 0; i < p.nodes(); ++i) y[i] = rep.path.coeffs(i, k);
    cs.push_back({"a_" + std::to_string(k + 1), times, y});
    if (truth) {
      for (int i = 0; i < p.nodes(); ++i) y[i] = truth->coeffs(i, k);
      cs.push_back({"true a_" + std::to_string(k + 1), times, y});
    }
  }
  write_text(out / "coefficients.svg", render_svg("Recovered coefficients", "t", "a", cs));
  return kOk;
}

inline int cmd_sweep_lambda(const Experiment& ex, const fs::path& out) {
  const InverseProblem p = detail::make_problem(ex, "sweep-lambda");
  const std::vector<LambdaSweepRow> rows = sweep_lambda(p, ex.config.inverse.lambdas);
  ensure_directory(out);
  Table t;
  t.header = {"lambda", "action", "data_misfit", "objective"};
  Json list = Json::array();
  std::vector<double> x, y;
  for (const auto& r : rows) {
    t.rows.push_back({r.lambda, r.action, r.data_misfit, r.objective});
    list.push_back({{"lambda", r.lambda},
                    {"action", json_number(r.action)},
                    {"data_misfit", json_number(r.data_misfit)},
                    {"objective", json_number(r.objective)},
                    {"termination", r.termination}});
    x.push_back(std::log10(r.lambda));
    y.push_back(r.action);
  }
  write_csv(out / "sweep.csv", t);
  write_json(out / "sweep.json", Json{{"command", "sweep-lambda"}, {"rows", list}});
  write_text(out / "sweep.svg", render_svg("Transport action of the minimizer", "log10 lambda", "action", {{"", x, y}}));
  return kOk;
}

inline int cmd_noise_study(const Experiment& ex, const fs::path& out) {
  const CoefficientPath& truth = detail::require_path(ex, "noise-study");
  InverseProblem p = detail::make_problem(ex, "noise-study");
  if (!detail::truth_for(ex, p))
    throw ConfigError(ex.config.source.string() + ": inverse.data: noise-study needs synthetic data on the path nodes");
  const NoiseStudy s = noise_scaling_study(p, truth, ex.config.inverse.sigmas, ex.config.inverse.seeds);
  ensure_directory(out);
  Table t;
  t.header = {"sigma", "seed", "path_error", "data_residual"};
  Json rows = Json::array();
  std::vector<double> x, y;
  for (const auto& r : s.rows) {
    t.rows.push_back({r.sigma, static_cast<double>(r.seed), r.path_error, r.data_residual});
    rows.push_back({{"sigma", r.sigma},
                    {"seed", r.seed},
                    {"path_error", json_number(r.path_error)},
                    {"data_residual", json_number(r.data_residual)},
                    {"termination", r.termination}});
    x.push_back(r.data_residual);
    y.push_back(r.path_error);
  }
  write_csv(out / "noise_study.csv", t);
  Json j;
  j["command"] = "noise-study";
  j["rows"] = rows;
  Json means = Json::array();
  for (std::size_t k = 0; k < s.sigmas.size(); ++k) means.push_back({{"sigma", s.sigmas[k]}, {"mean_error", json_number(s.mean_error[k])}});
  j["mean_error"] = means;
  j["slope"] = json_number(s.slope);
  j["kappa_min"] = json_number(s.kappa_min);
  j["bound"] = json_number(s.bound);
  j["within_bound"] = s.within_bound;
  write_json(out / "noise_study.json", j);

  const double xmax = x.empty() ? 0.0 : *std::max_element(x.begin(), x.end());
  write_text(out / "noise_study.svg",
             render_svg("Path error against data residual", "data residual", "path error",
                        {{"runs", x, y}, {"slope fit", {0.0, xmax}, {0.0, s.slope * xmax}},
                         {"1.5 x 2 / kappa", {0.0, xmax}, {0.0, 1.5 * s.bound * xmax}}}));
  return kOk;
}

inline int cmd_verify(const Experiment& ex, const fs::path& out, std::ostream* log = nullptr) {
  const std::vector<CheckResult> checks = run_verify(ex);
  if (log)
    for (const auto& c : checks)
      *log << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << std::setprecision(6) << c.value << ' ' << c.relation
           << ' ' << c.threshold << '\n';
  const Json j = scorecard(ex.config, checks);
  ensure_directory(out);
  write_json(out / "scorecard.json", j);
  Table t;
  t.header = {"check", "pass", "value", "threshold"};
  for (std::size_t k = 0; k < checks.size(); ++k)
    t.rows.push_back({static_cast<double>(k), checks[k].pass ? 1.0 : 0.0, checks[k].value, checks[k].threshold});
  write_csv(out / "scorecard.csv", t);
  return j["all_pass"].get<bool>() ? kOk : kVerifyFailed;
}

}  // namespace bhflow::cli
