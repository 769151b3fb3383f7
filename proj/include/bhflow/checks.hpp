#pragma once

// Property checks against independent oracles (analytic solutions, finite
// differences, identities). Each returns a named pass/fail record with the
// measured value and its threshold; the verify command and the acceptance
// suite are assembled from these.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "bhflow/inverse.hpp"
#include "bhflow/particles.hpp"

namespace bhflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  /// "<" (value must stay below threshold) or ">=" (value must reach it).
  std::string relation = "<";
  std::string detail;
};

namespace detail {

inline CheckResult below(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), value < threshold, value, threshold, "<", std::move(detail)};
}

inline CheckResult at_least(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), value >= threshold, value, threshold, ">=", std::move(detail)};
}

/// Smooth pseudo-random field: cosine modes with counter-based amplitudes and
/// phases, deterministic in (seed, stream).
inline ScalarField random_field(const Grid& g, std::uint64_t seed, std::uint64_t stream, double amplitude,
                                int modes = 4) {
  ScalarField f = ScalarField::Zero(g.size());
  std::uint64_t k = stream * 64;
  auto u = [&] { return 2.0 * counter_uniform(seed, k++) - 1.0; };
  const double lx = g.extent(0).lo, wx = g.extent(0).length();
  const double ly = g.extent(1).lo, wy = g.extent(1).length();
  for (int m = 1; m <= modes; ++m) {
    const double cx = amplitude * u() / m, px = std::numbers::pi * u();
    const double cy = amplitude * u() / m, py = std::numbers::pi * u();
    f += g.sample([&](double x, double y) {
      double v = cx * std::cos(m * std::numbers::pi * (x - lx) / wx + px);
      if (g.dim() == 2) v += cy * std::cos(m * std::numbers::pi * (y - ly) / wy + py);
      return v;
    });
  }
  return f;
}

inline Eigen::VectorXd random_coefficients(int m, std::uint64_t seed, std::uint64_t stream, double scale) {
  Eigen::VectorXd a(m);
  for (int k = 0; k < m; ++k) a[k] = scale * (2.0 * counter_uniform(seed, stream * 64 + k) - 1.0);
  return a;
}

}  // namespace detail

/// Max error of psi for h = 0, xi = cos(pi u) (u the x-coordinate rescaled to
/// [0, 1]) against the exact potential (L/pi)^2 cos(pi u).
inline double closed_form_neumann_error(const Grid& g) {
  const double lo = g.extent(0).lo, L = g.extent(0).length(), pi = std::numbers::pi;
  const ScalarField xi = g.sample([&](double x, double) { return std::cos(pi * (x - lo) / L); });
  const ScalarField exact = g.sample([&](double x, double) { return (L / pi) * (L / pi) * std::cos(pi * (x - lo) / L); });
  const NeumannSolution sol = solve(g, exp_normalize(g, g.constant(0.0)), xi, 1e-12);
  return (sol.psi - exact).cwiseAbs().maxCoeff();
}

inline Grid refined(const Grid& g, int factor = 2) {
  return g.dim() == 1 ? Grid::line(g.extent(0), g.cells(0) * factor)
                      : Grid::rectangle(g.extent(0), g.extent(1), g.cells(0) * factor, g.cells(1) * factor);
}

inline CheckResult check_closed_form_neumann(const Grid& g, double tol = 1e-4) {
  return detail::below("closed_form_neumann", closed_form_neumann_error(g), tol,
                       "max |psi - cos(pi x)/pi^2| on " + std::to_string(g.size()) + " cells");
}

inline CheckResult check_neumann_order(const Grid& g, double min_ratio = 3.5) {
  const double ratio = closed_form_neumann_error(g) / closed_form_neumann_error(refined(g));
  return detail::at_least("neumann_order", ratio, min_ratio, "error ratio under halving of the cell size");
}

/// Fourier basis at a = 0 on a unit interval: H = diag(1/(k pi)^2).
inline CheckResult check_kinetic_analytic(const Grid& g, int m = 3, double tol = 1e-5) {
  const Basis b = fourier_basis(g, m);
  const Eigen::MatrixXd H = kinetic_tensor(g, b, Eigen::VectorXd::Zero(m), false, 1e-12).H;
  const double L = g.extent(0).length();
  Eigen::MatrixXd exact = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) exact(k, k) = std::pow(L / ((k + 1) * std::numbers::pi), 2);
  return detail::below("kinetic_tensor_analytic", (H - exact).cwiseAbs().maxCoeff(), tol,
                       "max entry error against diag(1/(k pi)^2)");
}

/// Symmetry and positive definiteness of H at random admissible states.
/// The value reported is the asymmetry; failure of definiteness sets it to inf.
inline CheckResult check_kinetic_spd(const Grid& g, const Basis& b, int instances, std::uint64_t seed,
                                     const AdmissibleBounds& bounds = {}) {
  double asym = 0.0, min_eig = std::numeric_limits<double>::infinity();
  int used = 0;
  for (int t = 0; used < instances && t < 20 * instances; ++t) {
    const Eigen::VectorXd a = detail::random_coefficients(b.size(), seed, t, 1.0);
    if (!bounds.admits(state_of(g, b, a))) continue;
    ++used;
    const Eigen::MatrixXd H = kinetic_tensor(g, b, a, false).H;
    asym = std::max(asym, (H - H.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff());
  }
  CheckResult r = detail::below("kinetic_tensor_spd", min_eig > 0.0 ? asym : std::numeric_limits<double>::infinity(),
                                1e-10, "smallest eigenvalue " + std::to_string(min_eig));
  if (used < instances) r.pass = false;
  return r;
}

/// chi from the linearized solve against central differences of the forward
/// solve, in the discrete H1 norm.
inline CheckResult check_linearization(const Grid& g, int instances, std::uint64_t seed, double eps = 1e-4,
                                       double tol = 1e-4) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const ScalarField h = detail::random_field(g, seed, 3 * t, 1.0);
    const ScalarField eta = detail::random_field(g, seed, 3 * t + 1, 1.0);
    const ScalarField xi = detail::random_field(g, seed, 3 * t + 2, 1.0);
    const CoordState s = exp_normalize(g, h);
    const ScalarField chi = solve_linearized(g, s, eta, xi, solve(g, s, xi, 1e-12), 1e-12).psi;
    const ScalarField fd = (solve(g, exp_normalize(g, h + eps * eta), xi, 1e-12).psi -
                            solve(g, exp_normalize(g, h - eps * eta), xi, 1e-12).psi) /
                           (2 * eps);
    worst = std::max(worst, h1_norm(g, fd - chi));
  }
  return detail::below("linearization", worst, tol, "max discrete H1 error of chi against central differences");
}

/// D g_h(xi, zeta)[eta] against central differences of the transport form.
inline CheckResult check_form_derivative(const Grid& g, int instances, std::uint64_t seed, double eps = 1e-4,
                                         double tol = 1e-4) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const ScalarField h = detail::random_field(g, seed, 1000 + 4 * t, 1.0);
    const ScalarField eta = detail::random_field(g, seed, 1001 + 4 * t, 1.0);
    const ScalarField xi = detail::random_field(g, seed, 1002 + 4 * t, 1.0);
    const ScalarField zeta = detail::random_field(g, seed, 1003 + 4 * t, 1.0);
    const double d = transport_form_derivative(g, exp_normalize(g, h), eta, xi, zeta, 1e-12);
    const double fd = (transport_form(g, exp_normalize(g, h + eps * eta), xi, zeta, 1e-12) -
                       transport_form(g, exp_normalize(g, h - eps * eta), xi, zeta, 1e-12)) /
                      (2 * eps);
    worst = std::max(worst, std::abs(d - fd));
  }
  return detail::below("transport_form_derivative", worst, tol, "max |Dg - central difference|");
}

/// |loss(beta, hdot) - g(beta - hdot, beta - hdot)| over random instances,
/// together with loss(hdot, hdot) = 0.
inline CheckResult check_flow_matching(const Grid& g, int instances, std::uint64_t seed, double tol = 1e-10) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const CoordState s = exp_normalize(g, detail::random_field(g, seed, 2000 + 3 * t, 1.0));
    const ScalarField beta = detail::random_field(g, seed, 2001 + 3 * t, 1.0);
    const ScalarField hdot = detail::random_field(g, seed, 2002 + 3 * t, 1.0);
    const ScalarField diff = beta - hdot;
    worst = std::max(worst, std::abs(flow_match_loss(g, s, beta, hdot) - transport_form(g, s, diff, diff)));
    worst = std::max(worst, std::abs(flow_match_loss(g, s, hdot, hdot)));
  }
  return detail::below("flow_matching_identity", worst, tol, "max |loss - g(beta - hdot, beta - hdot)|");
}

/// clr-linear interpolation between h0 and h1 against the normalized
/// geometric mixture w0^(1-t) w1^t, at every node.
inline CheckResult check_fisher_rao(const Grid& g, const ScalarField& h0, const ScalarField& h1, int nodes,
                                    double tol = 1e-10) {
  const CoordState s0 = exp_normalize(g, h0), s1 = exp_normalize(g, h1);
  double worst = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double t = static_cast<double>(i) / (nodes - 1);
    const CoordState s = exp_normalize(g, (1 - t) * h0 + t * h1);
    ScalarField mix = (s0.w.array().pow(1 - t) * s1.w.array().pow(t)).matrix();
    mix /= integrate(g, mix);
    worst = std::max(worst, (s.w - mix).cwiseAbs().maxCoeff());
  }
  return detail::below("fisher_rao_identity", worst, tol, "max density difference at the path nodes");
}

/// Weak-form continuity residual of a sampled reduced path over the default
/// test battery.
inline double path_continuity_residual(const Grid& g, const Basis& b, const CoefficientPath& path,
                                       double tol = 1e-12) {
  std::vector<CoordState> states;
  std::vector<ScalarField> rates;
  const Eigen::MatrixXd r = path.rates();
  for (int i = 0; i < path.nodes(); ++i) {
    states.push_back(state_of(g, b, path.at(i)));
    rates.push_back(b.combine(r.row(i).transpose()));
  }
  return continuity_residual(g, states, rates, path.dt(), default_test_battery(g), tol);
}

/// Residual ratio under simultaneous halving of dt and the cell size.
inline CheckResult check_continuity_order(const std::function<Grid(int)>& grid_at,
                                          const std::function<Basis(const Grid&)>& basis_on,
                                          const std::function<CoefficientPath(int)>& path_at, double min_ratio = 3.0) {
  const Grid g1 = grid_at(1), g2 = grid_at(2);
  const double r1 = path_continuity_residual(g1, basis_on(g1), path_at(1));
  const double r2 = path_continuity_residual(g2, basis_on(g2), path_at(2));
  CheckResult r = detail::at_least("continuity_order", r1 / r2, min_ratio,
                                   "residual " + std::to_string(r1) + " -> " + std::to_string(r2));
  if (r2 == 0.0) r.pass = r1 == 0.0;
  return r;
}

/// Relative max-norm error of the inverse gradient against central
/// differences of the objective.
inline double inverse_gradient_error(const InverseProblem& p, const CoefficientPath& path, double step = 1e-5) {
  const Eigen::MatrixXd g = gradient(p, path);
  Eigen::MatrixXd fd(g.rows(), g.cols());
  for (int i = 0; i < path.nodes(); ++i)
    for (int k = 0; k < path.dim(); ++k) {
      CoefficientPath plus = path, minus = path;
      plus.coeffs(i, k) += step;
      minus.coeffs(i, k) -= step;
      fd(i, k) = (objective(p, plus).total - objective(p, minus).total) / (2 * step);
    }
  const double scale = g.cwiseAbs().maxCoeff();
  return scale > 0.0 ? (fd - g).cwiseAbs().maxCoeff() / scale : fd.cwiseAbs().maxCoeff();
}

/// Random paths and data on the given problem shape, `nodes` time nodes.
inline CheckResult check_inverse_gradient(const Grid& g, const Basis& b, const ObservationModel& model, int nodes,
                                          int instances, std::uint64_t seed, double tol = 1e-5) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    InverseProblem p(g, b, model, 1.0);
    p.lambda = std::pow(10.0, -2.0 + counter_uniform(seed, 5000 + t));
    p.mu = t % 3 == 1 ? 0.1 : 0.0;
    p.gamma = t % 3 == 2 ? 0.05 : 0.0;
    Eigen::MatrixXd coeffs(nodes, b.size()), data(nodes, model.dimension());
    for (int i = 0; i < nodes; ++i) {
      coeffs.row(i) = detail::random_coefficients(b.size(), seed, 6000 + t * 64 + i, 0.5).transpose();
      data.row(i) = (0.3 + detail::random_coefficients(model.dimension(), seed, 9000 + t * 64 + i, 0.2).array())
                        .matrix()
                        .transpose();
    }
    p.data = data;
    worst = std::max(worst, inverse_gradient_error(p, CoefficientPath(1.0, coeffs)));
  }
  return detail::below("inverse_gradient", worst, tol, "max relative error against central differences");
}

/// Every entry of J(a) against central differences of observe.
inline CheckResult check_jacobian(const Grid& g, const Basis& b, const ObservationModel& model, int instances,
                                  std::uint64_t seed, double eps = 1e-4, double tol = 1e-5) {
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Eigen::VectorXd a = detail::random_coefficients(b.size(), seed, 12000 + t, 0.5);
    const Eigen::MatrixXd J = observation_jacobian(g, b, model, a).J;
    for (int k = 0; k < b.size(); ++k) {
      const Eigen::VectorXd e = eps * Eigen::VectorXd::Unit(b.size(), k);
      const Eigen::VectorXd fd =
          (observe(model, state_of(g, b, a + e)) - observe(model, state_of(g, b, a - e))) / (2 * eps);
      worst = std::max(worst, (fd - J.col(k)).cwiseAbs().maxCoeff());
    }
  }
  return detail::below("jacobian_covariance", worst, tol, "max |J - central difference of observe|");
}

/// Particles sampled at t = 0 and advected to T against a terminal CDF of
/// the first coordinate (defaults to the cellwise terminal density).
inline CheckResult check_particles(const Grid& g, const Basis& b, const CoefficientPath& path, int particles, int steps,
                                   std::uint64_t seed, double tol = 0.02,
                                   std::function<double(double)> target = nullptr) {
  const Ensemble e0 = sample_initial(g, state_of(g, b, path.at(0)), particles, seed);
  const Ensemble e1 = advect(g, b, path, e0, steps);
  if (!target) target = marginal_cdf(g, state_of(g, b, path.at(path.nodes() - 1)), 0);
  return detail::below("particle_ks", ks_distance(coordinates(e1), target), tol,
                       std::to_string(particles) + " particles, " + std::to_string(steps) + " RK4 steps");
}

}  // namespace bhflow
