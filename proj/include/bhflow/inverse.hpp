#pragma once

// Reduced variational inverse problem
//
//   I[a] = 1/2 int |G(a) - d|^2 dt + lambda/2 int adot^T H(a) adot dt
//          + mu/2 int (|h(a)|^2 + |hdot|^2)_{L2(nu0)} dt + gamma/2 int a^T Gamma a dt,
//
// discretized on the path nodes (trapezoid for data and node penalties,
// midpoint-in-interval for rate terms) and minimized directly: the gradient
// is the exact gradient of the discrete objective.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bhflow/observe.hpp"
#include "bhflow/parallel.hpp"
#include "bhflow/random.hpp"

namespace bhflow {

struct OptimizerSettings {
  int max_iterations = 200;
  /// Stop when the max-norm of the gradient falls below this.
  double gradient_tolerance = 1e-10;
  /// Stop when the accepted step is below step_tolerance * (1 + |a|_inf).
  double step_tolerance = 1e-12;
  /// Stop when the relative objective decrease falls below this.
  double objective_tolerance = 1e-13;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 50;
  bool gauss_newton = true;
  /// Levenberg damping relative to the largest Gauss-Newton diagonal entry.
  double damping = 1e-10;
  double solver_tolerance = 1e-12;
};

struct InverseProblem {
  Grid grid;
  Basis basis;
  ObservationModel model;
  double horizon = 1.0;
  /// One row per time node, one column per feature.
  Eigen::MatrixXd data;
  double lambda = 1e-3;
  double mu = 0.0;
  double gamma = 0.0;
  /// SPD metric for the gamma penalty; empty means the basis L2 Gram.
  Eigen::MatrixXd gamma_metric;
  AdmissibleBounds bounds;
  OptimizerSettings settings;

  InverseProblem(Grid g, Basis b, ObservationModel m, double T = 1.0)
      : grid(std::move(g)), basis(std::move(b)), model(std::move(m)), horizon(T) {}

  int nodes() const { return static_cast<int>(data.rows()); }
  int dim() const { return basis.size(); }
  double dt() const { return horizon / (nodes() - 1); }
  const Eigen::MatrixXd& gamma_matrix() const { return gamma_metric.size() ? gamma_metric : basis.gram; }

  void validate() const {
    if (!(horizon > 0.0)) throw InputError("inverse: horizon must be positive");
    if (data.rows() < 3) throw InputError("inverse: data needs at least 3 time nodes");
    if (data.cols() != model.dimension()) throw ShapeError("inverse: data columns do not match the feature count");
    if (!data.allFinite()) throw InputError("inverse: non-finite data value");
    if (!(lambda >= 0.0) || !(mu >= 0.0) || !(gamma >= 0.0)) throw InputError("inverse: weights must be non-negative");
    const Eigen::MatrixXd& G = gamma_matrix();
    if (G.rows() != dim() || G.cols() != dim()) throw ShapeError("inverse: gamma metric has wrong size");
    if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().minCoeff() <= 0.0)
      throw InputError("inverse: gamma metric must be positive definite");
  }

  void check_sampling(const CoefficientPath& path) const {
    if (path.nodes() != nodes() || path.dim() != dim())
      throw ShapeError("inverse: path sampling does not match the data");
    if (std::abs(path.horizon - horizon) > 1e-12 * horizon) throw ShapeError("inverse: path horizon differs");
  }
};

struct ObjectiveBreakdown {
  double data = 0.0;
  double transport = 0.0;
  double mu = 0.0;
  double gamma = 0.0;
  double total = 0.0;
  bool admissible = true;
  /// First inadmissible node, or -(interval + 1) for an interval midpoint.
  int offending = 0;
};

namespace detail {

inline std::vector<double> trapezoid_weights(int nodes, double dt) {
  std::vector<double> w(nodes, dt);
  w.front() = w.back() = 0.5 * dt;
  return w;
}

struct Evaluation {
  ObjectiveBreakdown terms;
  Eigen::VectorXd gradient;  ///< node-major: index i * m + k
  Eigen::MatrixXd gauss_newton;
};

enum class Need { value, gradient, gauss_newton };

inline Eigen::VectorXd flatten(const Eigen::MatrixXd& a) {
  Eigen::VectorXd v(a.size());
  for (int i = 0; i < a.rows(); ++i) v.segment(i * a.cols(), a.cols()) = a.row(i).transpose();
  return v;
}

inline Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int nodes, int m) {
  Eigen::MatrixXd a(nodes, m);
  for (int i = 0; i < nodes; ++i) a.row(i) = v.segment(i * m, m).transpose();
  return a;
}

inline Evaluation evaluate(const InverseProblem& p, const Eigen::MatrixXd& a, Need need) {
  const int n = p.nodes(), m = p.dim();
  const double dt = p.dt();
  const std::vector<double> w = trapezoid_weights(n, dt);
  const bool want_grad = need != Need::value;
  const bool want_gn = need == Need::gauss_newton;
  const double tol = p.settings.solver_tolerance;
  Evaluation ev;
  ev.terms.total = std::numeric_limits<double>::infinity();

  std::vector<CoordState> states(n);
  for (int i = 0; i < n; ++i) {
    states[i] = state_of(p.grid, p.basis, a.row(i).transpose());
    if (!p.bounds.admits(states[i])) {
      ev.terms.admissible = false;
      ev.terms.offending = i;
      return ev;
    }
  }
  const bool with_transport = p.lambda > 0.0;
  std::vector<Eigen::VectorXd> mids(n - 1), rates(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    mids[i] = 0.5 * (a.row(i) + a.row(i + 1)).transpose();
    rates[i] = (a.row(i + 1) - a.row(i)).transpose() / dt;
    if (with_transport && !p.bounds.admits(state_of(p.grid, p.basis, mids[i]))) {
      ev.terms.admissible = false;
      ev.terms.offending = -(i + 1);
      return ev;
    }
  }

  if (want_grad) ev.gradient = Eigen::VectorXd::Zero(n * m);
  if (want_gn) ev.gauss_newton = Eigen::MatrixXd::Zero(n * m, n * m);

  // Data term, node by node.
  std::vector<double> data_terms(n);
  std::vector<Eigen::VectorXd> data_grad(n);
  std::vector<Eigen::MatrixXd> data_gn(n);
  parallel_for(n, [&](int i) {
    const Eigen::VectorXd r = observe(p.model, states[i]) - p.data.row(i).transpose();
    data_terms[i] = 0.5 * w[i] * r.squaredNorm();
    if (want_grad) {
      const Eigen::MatrixXd J = observation_matrix(p.basis, p.model, states[i]);
      data_grad[i] = w[i] * J.transpose() * r;
      if (want_gn) data_gn[i] = w[i] * J.transpose() * J;
    }
  });

  // Transport term on intervals: lambda/2 dt adot^T H(abar) adot.
  std::vector<double> action_terms(n - 1, 0.0);
  std::vector<Eigen::MatrixXd> Hs(n - 1);
  std::vector<Eigen::VectorXd> curvature(n - 1);
  if (with_transport) {
    parallel_for(n - 1, [&](int i) {
      const ReducedState rs = reduced_state(p.grid, p.basis, mids[i], tol);
      Hs[i] = kinetic_matrix(p.grid, rs);
      action_terms[i] = 0.5 * p.lambda * dt * rates[i].dot(Hs[i] * rates[i]);
      if (want_grad) {
        const std::vector<Eigen::MatrixXd> dH = kinetic_derivative(p.grid, p.basis, rs);
        curvature[i].resize(m);
        for (int j = 0; j < m; ++j) curvature[i][j] = rates[i].dot(dH[j] * rates[i]);
      }
    });
  }

  ObjectiveBreakdown& t = ev.terms;
  t.data = 0.0;
  for (int i = 0; i < n; ++i) {
    t.data += data_terms[i];
    if (want_grad) ev.gradient.segment(i * m, m) += data_grad[i];
    if (want_gn) ev.gauss_newton.block(i * m, i * m, m, m) += data_gn[i];
  }
  t.transport = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    t.transport += action_terms[i];
    if (!with_transport) continue;
    if (want_grad) {
      const Eigen::VectorXd push = p.lambda * Hs[i] * rates[i];
      const Eigen::VectorXd curv = 0.25 * p.lambda * dt * curvature[i];
      ev.gradient.segment(i * m, m) += -push + curv;
      ev.gradient.segment((i + 1) * m, m) += push + curv;
    }
    if (want_gn) {
      const Eigen::MatrixXd B = (p.lambda / dt) * Hs[i];
      ev.gauss_newton.block(i * m, i * m, m, m) += B;
      ev.gauss_newton.block((i + 1) * m, (i + 1) * m, m, m) += B;
      ev.gauss_newton.block(i * m, (i + 1) * m, m, m) -= B;
      ev.gauss_newton.block((i + 1) * m, i * m, m, m) -= B;
    }
  }

  // Quadratic penalties: exact pullbacks, so the Gauss-Newton blocks are
  // their Hessians.
  t.mu = t.gamma = 0.0;
  const Eigen::MatrixXd& G = p.basis.gram;
  const Eigen::MatrixXd& Gam = p.gamma_matrix();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd ai = a.row(i).transpose();
    if (p.mu > 0.0) {
      t.mu += 0.5 * p.mu * w[i] * ai.dot(G * ai);
      if (want_grad) ev.gradient.segment(i * m, m) += p.mu * w[i] * G * ai;
      if (want_gn) ev.gauss_newton.block(i * m, i * m, m, m) += p.mu * w[i] * G;
    }
    if (p.gamma > 0.0) {
      t.gamma += 0.5 * p.gamma * w[i] * ai.dot(Gam * ai);
      if (want_grad) ev.gradient.segment(i * m, m) += p.gamma * w[i] * Gam * ai;
      if (want_gn) ev.gauss_newton.block(i * m, i * m, m, m) += p.gamma * w[i] * Gam;
    }
  }
  if (p.mu > 0.0)
    for (int i = 0; i + 1 < n; ++i) {
      t.mu += 0.5 * p.mu * dt * rates[i].dot(G * rates[i]);
      if (want_grad) {
        const Eigen::VectorXd push = p.mu * G * rates[i];
        ev.gradient.segment(i * m, m) -= push;
        ev.gradient.segment((i + 1) * m, m) += push;
      }
      if (want_gn) {
        const Eigen::MatrixXd B = (p.mu / dt) * G;
        ev.gauss_newton.block(i * m, i * m, m, m) += B;
        ev.gauss_newton.block((i + 1) * m, (i + 1) * m, m, m) += B;
        ev.gauss_newton.block(i * m, (i + 1) * m, m, m) -= B;
        ev.gauss_newton.block((i + 1) * m, i * m, m, m) -= B;
      }
    }
  t.total = t.data + t.transport + t.mu + t.gamma;
  return ev;
}

}  // namespace detail

/// Discrete objective with its per-term breakdown. Inadmissible nodes (or
/// interval midpoints, where the kinetic tensor is evaluated) give +inf.
inline ObjectiveBreakdown objective(const InverseProblem& p, const CoefficientPath& path) {
  p.check_sampling(path);
  return detail::evaluate(p, path.coeffs, detail::Need::value).terms;
}

/// Exact gradient of the discrete objective, one row per node.
inline Eigen::MatrixXd gradient(const InverseProblem& p, const CoefficientPath& path) {
  p.check_sampling(path);
  const detail::Evaluation ev = detail::evaluate(p, path.coeffs, detail::Need::gradient);
  if (!ev.terms.admissible) throw DomainError("inverse gradient: path is not admissible");
  return detail::unflatten(ev.gradient, path.nodes(), path.dim());
}

/// Minimum local observability constant over the path nodes.
inline double path_kappa(const InverseProblem& p, const CoefficientPath& path) {
  std::vector<double> k(path.nodes());
  parallel_for(path.nodes(), [&](int i) { k[i] = observation_jacobian(p.grid, p.basis, p.model, path.at(i)).kappa; });
  return *std::min_element(k.begin(), k.end());
}

struct RecoveryErrors {
  double coefficient_l2 = 0.0;   ///< (int |a - a_true|^2 dt)^{1/2}
  double coefficient_sup = 0.0;  ///< max over nodes and components
  double law_sup = 0.0;          ///< sup_t |h - h_true|_{L2(nu0)}
  double law_l2 = 0.0;           ///< |h - h_true|_{L2(0,T; L2(nu0))}
  double score_sup = 0.0;        ///< sup_t |grad(h - h_true)|_{L2(nu0)}
  double velocity_l2sq = 0.0;    ///< int |v - v_true|^2_{L2(nu0)} dt
  double truth_kappa_min = 0.0;
};

struct RecoveryReport {
  CoefficientPath path;
  std::vector<double> history;
  ObjectiveBreakdown breakdown;
  double gradient_norm = 0.0;
  int iterations = 0;
  std::string termination;
  bool converged = false;
  double kappa_min = 0.0;
  bool observable = false;
  std::optional<RecoveryErrors> errors;
};

inline RecoveryErrors compare_to_truth(const InverseProblem& p, const CoefficientPath& rec,
                                       const CoefficientPath& truth) {
  p.check_sampling(rec);
  p.check_sampling(truth);
  const int n = rec.nodes();
  const Eigen::MatrixXd rec_rates = rec.rates(), truth_rates = truth.rates();
  std::vector<double> coef_sq(n), law_sq(n), vel_sq(n), score(n);
  parallel_for(n, [&](int i) {
    const Eigen::VectorXd d = rec.at(i) - truth.at(i);
    coef_sq[i] = d.squaredNorm();
    law_sq[i] = d.dot(p.basis.gram * d);
    const FaceField gd = gradient(p.grid, p.basis.combine(d));
    score[i] = std::sqrt(face_inner(p.grid, gd, gd));
    const FaceField v = reduced_velocity(p.grid, reduced_state(p.grid, p.basis, rec.at(i), p.settings.solver_tolerance),
                                         rec_rates.row(i).transpose());
    const FaceField vt = reduced_velocity(
        p.grid, reduced_state(p.grid, p.basis, truth.at(i), p.settings.solver_tolerance), truth_rates.row(i).transpose());
    const FaceField dv = v - vt;
    vel_sq[i] = face_inner(p.grid, dv, dv);
  });
  RecoveryErrors e;
  e.coefficient_l2 = std::sqrt(trapezoid(coef_sq, rec.dt()));
  e.coefficient_sup = (rec.coeffs - truth.coeffs).cwiseAbs().maxCoeff();
  e.law_sup = std::sqrt(std::max(0.0, *std::max_element(law_sq.begin(), law_sq.end())));
  e.law_l2 = std::sqrt(std::max(0.0, trapezoid(law_sq, rec.dt())));
  e.score_sup = *std::max_element(score.begin(), score.end());
  e.velocity_l2sq = trapezoid(vel_sq, rec.dt());
  e.truth_kappa_min = path_kappa(p, truth);
  return e;
}

/// Gauss-Newton fit of a single state to one data vector, started at a0.
inline Eigen::VectorXd static_fit(const InverseProblem& p, const Eigen::VectorXd& target, Eigen::VectorXd a,
                                  int max_iterations = 60) {
  auto misfit = [&](const Eigen::VectorXd& x) {
    const CoordState s = state_of(p.grid, p.basis, x);
    if (!p.bounds.admits(s)) return std::numeric_limits<double>::infinity();
    return 0.5 * (observe(p.model, s) - target).squaredNorm();
  };
  double f = misfit(a);
  if (!std::isfinite(f)) throw DomainError("static_fit: starting state is not admissible");
  for (int it = 0; it < max_iterations; ++it) {
    const CoordState s = state_of(p.grid, p.basis, a);
    const Eigen::MatrixXd J = observation_matrix(p.basis, p.model, s);
    const Eigen::VectorXd g = J.transpose() * (observe(p.model, s) - target);
    if (g.lpNorm<Eigen::Infinity>() <= p.settings.gradient_tolerance) break;
    Eigen::MatrixXd M = J.transpose() * J;
    M.diagonal().array() += p.settings.damping * std::max(1.0, M.diagonal().maxCoeff()) + 1e-14;
    Eigen::VectorXd dir = -M.ldlt().solve(g);
    if (!(dir.dot(g) < 0.0)) dir = -g;
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k < p.settings.max_backtracks; ++k, alpha *= p.settings.backtrack) {
      const double fn = misfit(a + alpha * dir);
      if (fn <= f + p.settings.armijo * alpha * dir.dot(g)) {
        a += alpha * dir;
        accepted = f - fn > p.settings.objective_tolerance * f;
        f = fn;
        break;
      }
    }
    if (!accepted) break;
  }
  return a;
}

/// Constant path at the static fit of the first data vector.
inline CoefficientPath default_initial_path(const InverseProblem& p) {
  p.validate();
  const Eigen::VectorXd a0 = static_fit(p, p.data.row(0).transpose(), Eigen::VectorXd::Zero(p.dim()));
  Eigen::MatrixXd c(p.nodes(), p.dim());
  for (int i = 0; i < p.nodes(); ++i) c.row(i) = a0.transpose();
  return {p.horizon, c};
}

/// Gauss-Newton (damped, on data and exact quadratic terms) with Armijo
/// backtracking; falls back to steepest descent when the Gauss-Newton step
/// is not a descent direction or its line search fails.
inline RecoveryReport solve_inverse(const InverseProblem& p, const CoefficientPath& initial) {
  p.validate();
  p.check_sampling(initial);
  const OptimizerSettings& opt = p.settings;
  const int n = p.nodes(), m = p.dim();
  Eigen::MatrixXd a = initial.coeffs;
  const auto need = opt.gauss_newton ? detail::Need::gauss_newton : detail::Need::gradient;
  detail::Evaluation ev = detail::evaluate(p, a, need);
  if (!ev.terms.admissible) throw DomainError("solve_inverse: initial path is not admissible");

  RecoveryReport rep;
  rep.history.push_back(ev.terms.total);
  rep.termination = "max_iterations";
  bool fresh = true;  // ev holds derivatives at the current iterate
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd& g = ev.gradient;
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
      rep.termination = "gradient_tolerance";
      rep.converged = true;
      break;
    }
    std::vector<Eigen::VectorXd> directions;
    if (opt.gauss_newton) {
      Eigen::MatrixXd M = ev.gauss_newton;
      M.diagonal().array() += opt.damping * std::max(1.0, M.diagonal().maxCoeff()) + 1e-14;
      const Eigen::VectorXd d = -M.ldlt().solve(g);
      if (d.allFinite() && d.dot(g) < 0.0) directions.push_back(d);
    }
    directions.push_back(-g);

    bool accepted = false;
    double step = 0.0, f_new = 0.0;
    Eigen::MatrixXd a_new;
    for (const Eigen::VectorXd& d : directions) {
      const double slope = d.dot(g);
      double alpha = 1.0;
      for (int k = 0; k < opt.max_backtracks; ++k, alpha *= opt.backtrack) {
        a_new = a + detail::unflatten(alpha * d, n, m);
        const double f = detail::evaluate(p, a_new, detail::Need::value).terms.total;
        if (std::isfinite(f) && f <= ev.terms.total + opt.armijo * alpha * slope) {
          accepted = true;
          f_new = f;
          step = alpha * d.lpNorm<Eigen::Infinity>();
          break;
        }
      }
      if (accepted) break;
    }
    if (!accepted) {
      rep.termination = "line_search_failed";
      break;
    }
    const double f_old = ev.terms.total;
    a = a_new;
    rep.history.push_back(f_new);
    ++rep.iterations;
    fresh = false;
    if (step <= opt.step_tolerance * (1.0 + a.lpNorm<Eigen::Infinity>())) {
      rep.termination = "step_tolerance";
      rep.converged = true;
      break;
    }
    if (f_old - f_new <= opt.objective_tolerance * std::abs(f_old)) {
      rep.termination = "objective_tolerance";
      rep.converged = true;
      break;
    }
    ev = detail::evaluate(p, a, need);
    fresh = true;
  }
  if (!fresh) ev = detail::evaluate(p, a, detail::Need::gradient);
  rep.path = CoefficientPath(p.horizon, a);
  rep.breakdown = ev.terms;
  rep.gradient_norm = ev.gradient.lpNorm<Eigen::Infinity>();
  rep.kappa_min = path_kappa(p, rep.path);
  rep.observable = rep.kappa_min > 0.0;
  return rep;
}

inline RecoveryReport solve_inverse(const InverseProblem& p) { return solve_inverse(p, default_initial_path(p)); }

inline RecoveryReport solve_inverse(const InverseProblem& p, const CoefficientPath& initial,
                                    const CoefficientPath& truth) {
  RecoveryReport rep = solve_inverse(p, initial);
  rep.errors = compare_to_truth(p, rep.path, truth);
  return rep;
}

/// d_i = G(a_true(t_i)) + sigma * N(0, 1), draws indexed by (node, feature).
inline Eigen::MatrixXd make_synthetic(const InverseProblem& p, const CoefficientPath& truth, double sigma,
                                      std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InputError("make_synthetic: noise level must be non-negative");
  if (truth.dim() != p.dim()) throw ShapeError("make_synthetic: truth has wrong coefficient dimension");
  const PathAdmissibility adm = bhflow::check_path(p.grid, p.basis, truth, p.bounds);
  if (!adm.admissible)
    throw DomainError("make_synthetic: truth is inadmissible at node " + std::to_string(adm.offending_node));
  const int r = p.model.dimension();
  Eigen::MatrixXd d(truth.nodes(), r);
  for (int i = 0; i < truth.nodes(); ++i) {
    d.row(i) = observe(p.model, state_of(p.grid, p.basis, truth.at(i))).transpose();
    if (sigma > 0.0)
      for (int j = 0; j < r; ++j) d(i, j) += sigma * counter_normal(seed, static_cast<std::uint64_t>(i) * r + j);
  }
  return d;
}

struct NoiseStudyRow {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double path_error = 0.0;     ///< |h - h_true|_{L2(0,T; L2(nu0))}
  double data_residual = 0.0;  ///< |G(h) - G(h_true)|_{L2(0,T)}
  std::string termination;
};

struct NoiseStudy {
  std::vector<NoiseStudyRow> rows;
  std::vector<double> sigmas;
  std::vector<double> mean_error;  ///< per sigma, averaged over seeds
  double slope = 0.0;              ///< least squares through the origin, error vs residual
  double kappa_min = 0.0;          ///< along the true path
  double bound = 0.0;              ///< 2 / kappa_min
  bool within_bound = false;       ///< slope <= 1.5 * bound
};

/// Recovers the truth from noisy synthetic data for every (sigma, seed) and
/// fits the error/residual slope. The template's data block is replaced.
inline NoiseStudy noise_scaling_study(const InverseProblem& tmpl, const CoefficientPath& truth,
                                      const std::vector<double>& sigmas, const std::vector<std::uint64_t>& seeds) {
  if (sigmas.empty() || seeds.empty()) throw InputError("noise study: need at least one sigma and one seed");
  NoiseStudy out;
  out.sigmas = sigmas;
  InverseProblem p = tmpl;
  p.data = make_synthetic(p, truth, 0.0, 0);
  out.kappa_min = path_kappa(p, truth);
  if (!(out.kappa_min > 0.0)) throw InputError("noise study: problem is unobservable along the truth (kappa = 0)");
  out.bound = 2.0 / out.kappa_min;

  std::vector<Eigen::VectorXd> clean(truth.nodes());
  for (int i = 0; i < truth.nodes(); ++i) clean[i] = observe(p.model, state_of(p.grid, p.basis, truth.at(i)));

  double num = 0.0, den = 0.0;
  for (double sigma : sigmas) {
    double sum = 0.0;
    for (std::uint64_t seed : seeds) {
      p.data = make_synthetic(p, truth, sigma, seed);
      const RecoveryReport rep = solve_inverse(p);
      NoiseStudyRow row;
      row.sigma = sigma;
      row.seed = seed;
      row.termination = rep.termination;
      std::vector<double> err(truth.nodes()), res(truth.nodes());
      for (int i = 0; i < truth.nodes(); ++i) {
        const Eigen::VectorXd d = rep.path.at(i) - truth.at(i);
        err[i] = d.dot(p.basis.gram * d);
        res[i] = (observe(p.model, state_of(p.grid, p.basis, rep.path.at(i))) - clean[i]).squaredNorm();
      }
      row.path_error = std::sqrt(std::max(0.0, trapezoid(err, truth.dt())));
      row.data_residual = std::sqrt(trapezoid(res, truth.dt()));
      num += row.path_error * row.data_residual;
      den += row.data_residual * row.data_residual;
      sum += row.path_error;
      out.rows.push_back(row);
    }
    out.mean_error.push_back(sum / static_cast<double>(seeds.size()));
  }
  out.slope = den > 0.0 ? num / den : 0.0;
  out.within_bound = out.slope <= 1.5 * out.bound;
  return out;
}

struct LambdaSweepRow {
  double lambda = 0.0;
  double action = 0.0;       ///< int adot^T H adot dt of the minimizer (without lambda)
  double data_misfit = 0.0;  ///< the data term of the objective
  double objective = 0.0;
  std::string termination;
};

/// Solves the same problem for each lambda from the default initialization.
inline std::vector<LambdaSweepRow> sweep_lambda(const InverseProblem& tmpl, const std::vector<double>& lambdas) {
  std::vector<LambdaSweepRow> rows;
  for (double lam : lambdas) {
    if (!(lam > 0.0)) throw InputError("sweep_lambda: lambda values must be positive");
    InverseProblem p = tmpl;
    p.lambda = lam;
    const RecoveryReport rep = solve_inverse(p);
    LambdaSweepRow row;
    row.lambda = lam;
    row.action = 2.0 * rep.breakdown.transport / lam;
    row.data_misfit = rep.breakdown.data;
    row.objective = rep.breakdown.total;
    row.termination = rep.termination;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bhflow
