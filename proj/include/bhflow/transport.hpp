#pragma once

// Canonical transport map T_h xi = grad psi_{h,xi}, the transport form
// g_h(xi, zeta) = int grad psi_xi . grad psi_zeta d rho_h, its state
// derivative, flow-matching losses, path actions and continuity checks.
//
// Velocities live on faces. Every rho-weighted face integral uses the same
// conductances as the Neumann operator, so g_h(xi, zeta) = psi_xi^T A psi_zeta
// holds discretely.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bhflow/neumann.hpp"

namespace bhflow {

struct TransportEval {
  FaceField velocity;
  double kinetic_energy = 0.0;
  NeumannSolution potential;
};

/// int F1 . F2 d rho over faces, with rho interpolated arithmetically.
inline double rho_face_inner(const Grid& g, const CoordState& s, const FaceField& a, const FaceField& b) {
  const FaceField w = face_average(g, s.w);
  return face_inner(g, a, b, &w);
}

inline TransportEval transport_map(const Grid& g, const CoordState& s, const ScalarField& xi,
                                   double tol = kDefaultSolverTolerance) {
  TransportEval ev;
  ev.potential = solve(g, s, xi, tol);
  ev.velocity = ev.potential.grad_psi;
  ev.kinetic_energy = rho_face_inner(g, s, ev.velocity, ev.velocity);
  return ev;
}

inline double transport_form(const Grid& g, const CoordState& s, const ScalarField& xi, const ScalarField& zeta,
                             double tol = kDefaultSolverTolerance) {
  const WeightedOperator op = assemble(g, s);
  const NeumannSolution a = solve(g, s, op, xi, tol);
  const NeumannSolution b = solve(g, s, op, zeta, tol);
  return rho_face_inner(g, s, a.grad_psi, b.grad_psi);
}

/// Directional derivative of g_h(xi, zeta) in the state direction eta:
///   int eta_c grad psi_xi . grad psi_zeta d rho
///   + int grad chi_{eta,xi} . grad psi_zeta d rho + int grad psi_xi . grad chi_{eta,zeta} d rho.
inline double transport_form_derivative(const Grid& g, const CoordState& s, const ScalarField& eta,
                                        const ScalarField& xi, const ScalarField& zeta,
                                        double tol = kDefaultSolverTolerance) {
  const WeightedOperator op = assemble(g, s);
  const NeumannSolution psi_xi = solve(g, s, op, xi, tol);
  const NeumannSolution psi_zeta = solve(g, s, op, zeta, tol);
  const NeumannSolution chi_xi = solve_linearized(g, s, op, eta, xi, psi_xi, tol);
  const NeumannSolution chi_zeta = solve_linearized(g, s, op, eta, zeta, psi_zeta, tol);

  const FaceField weight_rate = face_average(g, density_differential(s, eta));
  const double measure_term = face_inner(g, psi_xi.grad_psi, psi_zeta.grad_psi, &weight_rate);
  return measure_term + rho_face_inner(g, s, chi_xi.grad_psi, psi_zeta.grad_psi) +
         rho_face_inner(g, s, psi_xi.grad_psi, chi_zeta.grad_psi);
}

/// int |T beta - T hdot|^2 d rho, evaluated from the two velocity fields.
inline double flow_match_loss(const Grid& g, const CoordState& s, const ScalarField& beta, const ScalarField& hdot,
                              double tol = kDefaultSolverTolerance) {
  const WeightedOperator op = assemble(g, s);
  const FaceField u = solve(g, s, op, beta, tol).grad_psi;
  const FaceField v = solve(g, s, op, hdot, tol).grad_psi;
  const FaceField diff = u - v;
  return rho_face_inner(g, s, diff, diff);
}

namespace detail {

inline void check_path_samples(const std::vector<CoordState>& states, const std::vector<ScalarField>& hdots,
                               double dt) {
  if (states.size() != hdots.size()) throw ShapeError("path: states and rates differ in length");
  if (!(dt > 0.0)) throw InputError("path: time step must be positive");
}

}  // namespace detail

/// Weak-form residuals
///   (E_{rho_{i+1}} eta - E_{rho_{i-1}} eta) / (2 dt) - int grad eta . v_i d rho_i,
/// with v_i = T_{h_i} hdot_i, for every interior node i (row i - 1) and test
/// function eta (column).
inline std::vector<std::vector<double>> continuity_residuals(const Grid& g, const std::vector<CoordState>& states,
                                                             const std::vector<ScalarField>& hdots, double dt,
                                                             const std::vector<ScalarField>& tests,
                                                             double tol = kDefaultSolverTolerance) {
  detail::check_path_samples(states, hdots, dt);
  if (states.size() < 3) throw InputError("continuity_residual: at least 3 time nodes required");
  std::vector<FaceField> test_grads;
  test_grads.reserve(tests.size());
  for (const auto& t : tests) test_grads.push_back(gradient(g, t));

  std::vector<std::vector<double>> out(states.size() - 2, std::vector<double>(tests.size()));
  for (std::size_t i = 1; i + 1 < states.size(); ++i) {
    const FaceField v = solve(g, states[i], hdots[i], tol).grad_psi;
    for (std::size_t k = 0; k < tests.size(); ++k) {
      const double lhs = (mean_under(states[i + 1], tests[k]) - mean_under(states[i - 1], tests[k])) / (2.0 * dt);
      out[i - 1][k] = lhs - rho_face_inner(g, states[i], test_grads[k], v);
    }
  }
  return out;
}

/// Largest absolute weak-form residual over interior nodes and tests.
inline double continuity_residual(const Grid& g, const std::vector<CoordState>& states,
                                  const std::vector<ScalarField>& hdots, double dt,
                                  const std::vector<ScalarField>& tests, double tol = kDefaultSolverTolerance) {
  double worst = 0.0;
  for (const auto& row : continuity_residuals(g, states, hdots, dt, tests, tol))
    for (double r : row) worst = std::max(worst, std::abs(r));
  return worst;
}

/// Per-node kinetic energies g_{h_i}(hdot_i, hdot_i).
inline std::vector<double> kinetic_energies(const Grid& g, const std::vector<CoordState>& states,
                                            const std::vector<ScalarField>& hdots,
                                            double tol = kDefaultSolverTolerance) {
  std::vector<double> e(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) e[i] = transport_map(g, states[i], hdots[i], tol).kinetic_energy;
  return e;
}

inline double trapezoid(const std::vector<double>& values, double dt) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    s += (i == 0 || i + 1 == values.size() ? 0.5 : 1.0) * values[i];
  return values.size() == 1 ? 0.0 : s * dt;
}

/// Trapezoid-in-time transport action of a sampled path.
inline double transport_action(const Grid& g, const std::vector<CoordState>& states,
                               const std::vector<ScalarField>& hdots, double dt,
                               double tol = kDefaultSolverTolerance) {
  detail::check_path_samples(states, hdots, dt);
  if (states.size() < 2) throw InputError("transport_action: at least 2 time nodes required");
  return trapezoid(kinetic_energies(g, states, hdots, tol), dt);
}

/// Test functions x_i, x_i^2, cos(pi x_i), cos(2 pi x_i) for every axis.
inline std::vector<ScalarField> default_test_battery(const Grid& g) {
  std::vector<ScalarField> out;
  for (int a = 0; a < g.dim(); ++a) {
    auto coord = [a](double x, double y) { return a == 0 ? x : y; };
    out.push_back(g.sample([&](double x, double y) { return coord(x, y); }));
    out.push_back(g.sample([&](double x, double y) { return coord(x, y) * coord(x, y); }));
    out.push_back(g.sample([&](double x, double y) { return std::cos(std::numbers::pi * coord(x, y)); }));
    out.push_back(g.sample([&](double x, double y) { return std::cos(2.0 * std::numbers::pi * coord(x, y)); }));
  }
  return out;
}

}  // namespace bhflow
