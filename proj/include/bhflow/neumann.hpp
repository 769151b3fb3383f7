#pragma once

// Weighted Neumann problem
//
//   -div(w grad psi) = w (xi - E_rho[xi])   in Omega,   w d psi / dn = 0 on the boundary,
//
// in weak form with nu0 quadrature, plus its linearization in the state.
// The discrete operator is A = G^T diag(omega_f * wbar_f) G, where G is the
// interior-face gradient, omega_f the face quadrature weight and wbar_f the
// arithmetic face average of w. Constants span its kernel; solves are
// preconditioned CG restricted to mean-zero vectors.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "bhflow/bhspace.hpp"
#include "bhflow/grid.hpp"

namespace bhflow {

inline constexpr double kDefaultSolverTolerance = 1e-10;

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct WeightedOperator {
  SparseMatrix matrix;
  Eigen::VectorXd diagonal;
  /// omega_f * wbar_f on each face; zero on boundary faces (Neumann closure).
  FaceField conductance;

  int size() const { return static_cast<int>(matrix.rows()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix * x; }
};

struct NeumannSolution {
  ScalarField psi;
  FaceField grad_psi;
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

/// Calls fn(face_axis, face_index, cell_minus, cell_plus, spacing) for every
/// interior face.
template <class Fn>
void for_each_interior_face(const Grid& g, Fn&& fn) {
  const int nx = g.cells(0), ny = g.cells(1);
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i) fn(0, j * (nx + 1) + i, g.cell(i - 1, j), g.cell(i, j), g.spacing(0));
  if (g.dim() == 2)
    for (int j = 1; j < ny; ++j)
      for (int i = 0; i < nx; ++i) fn(1, j * nx + i, g.cell(i, j - 1), g.cell(i, j), g.spacing(1));
}

inline void remove_mean(Eigen::VectorXd& v) { v.array() -= v.mean(); }

}  // namespace detail

/// Face conductances omega_f * avg(w) with boundary faces zeroed.
inline FaceField face_conductance(const Grid& g, const ScalarField& w) {
  FaceField k = face_average(g, w);
  for (int a = 0; a < g.dim(); ++a)
    for (int f = 0; f < g.face_count(a); ++f) k[a][f] = g.is_boundary_face(a, f) ? 0.0 : g.face_weight(a, f) * k[a][f];
  return k;
}

inline WeightedOperator assemble(const Grid& g, const CoordState& s) {
  g.check(s.w, "assemble");
  if (!(s.w.array() > 0.0).all()) throw DomainError("assemble: density must be strictly positive");
  WeightedOperator op;
  op.conductance = face_conductance(g, s.w);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(4 * (g.face_count(0) + (g.dim() == 2 ? g.face_count(1) : 0))));
  detail::for_each_interior_face(g, [&](int axis, int f, int cm, int cp, double d) {
    const double k = op.conductance[axis][f] / (d * d);
    trip.emplace_back(cm, cm, k);
    trip.emplace_back(cp, cp, k);
    trip.emplace_back(cm, cp, -k);
    trip.emplace_back(cp, cm, -k);
  });
  op.matrix.resize(g.size(), g.size());
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  op.matrix.makeCompressed();
  op.diagonal = op.matrix.diagonal();
  return op;
}

/// Jacobi-preconditioned CG for A x = b on the mean-zero subspace. The
/// returned x has zero mean.
inline Eigen::VectorXd solve_mean_zero(const WeightedOperator& op, Eigen::VectorXd b, double tol, int& iterations,
                                       double& residual, int max_iterations = 0) {
  const int n = op.size();
  if (max_iterations <= 0) max_iterations = 10 * n;
  const double compat = b.sum();
  if (std::abs(compat) > 1e-8) throw std::logic_error("neumann: incompatible right-hand side");
  detail::remove_mean(b);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  iterations = 0;
  residual = 0.0;
  if (bnorm == 0.0) return x;

  const Eigen::ArrayXd inv_diag = op.diagonal.array().inverse();
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = (inv_diag * r.array()).matrix();
  detail::remove_mean(z);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  Eigen::VectorXd ap(n);
  while (true) {
    residual = r.norm() / bnorm;
    if (residual <= tol) break;
    if (iterations >= max_iterations)
      throw ConvergenceError("neumann: CG did not converge (relative residual " + std::to_string(residual) + ")",
                             residual, iterations);
    ap.noalias() = op.matrix * p;
    const double pap = p.dot(ap);
    if (!(pap > 0.0))
      throw ConvergenceError("neumann: CG breakdown (non-positive curvature)", residual, iterations);
    const double alpha = rz / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    detail::remove_mean(r);
    z = (inv_diag * r.array()).matrix();
    detail::remove_mean(z);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
    ++iterations;
  }
  // Residual recomputed from scratch so the report is not the recursive
  // estimate.
  residual = (b - op.matrix * x).norm() / bnorm;
  detail::remove_mean(x);
  return x;
}

/// Quadrature-weighted forcing omega * w * (xi - E_rho[xi]).
inline Eigen::VectorXd neumann_forcing(const Grid& g, const CoordState& s, const ScalarField& xi) {
  return g.weight() * density_differential(s, xi);
}

inline NeumannSolution solve_rhs(const Grid& g, const WeightedOperator& op, const Eigen::VectorXd& rhs, double tol) {
  NeumannSolution sol;
  sol.psi = solve_mean_zero(op, rhs, tol, sol.iterations, sol.residual);
  sol.grad_psi = gradient(g, sol.psi);
  return sol;
}

/// Solve with a pre-assembled operator for the same state.
inline NeumannSolution solve(const Grid& g, const CoordState& s, const WeightedOperator& op, const ScalarField& xi,
                             double tol = kDefaultSolverTolerance) {
  g.check(xi, "neumann solve");
  if (!xi.allFinite()) throw InputError("neumann solve: non-finite direction");
  return solve_rhs(g, op, neumann_forcing(g, s, xi), tol);
}

inline NeumannSolution solve(const Grid& g, const CoordState& s, const ScalarField& xi,
                             double tol = kDefaultSolverTolerance) {
  return solve(g, s, assemble(g, s), xi, tol);
}

/// Right-hand side of the linearized problem for the state derivative of
/// psi_{h, xi} in direction eta:
///   omega w (eta_c xi_c - Cov(eta, xi)) - G^T diag(omega avg(w eta_c)) G psi,
/// with eta_c, xi_c the rho-centered directions.
inline Eigen::VectorXd linearized_forcing(const Grid& g, const CoordState& s, const ScalarField& eta,
                                          const ScalarField& xi, const NeumannSolution& base) {
  g.check(eta, "linearized eta");
  g.check(xi, "linearized xi");
  const ScalarField eta_c = center_under(s, eta);
  const ScalarField xi_c = center_under(s, xi);
  const double cov = cov_under(s, eta, xi);
  Eigen::VectorXd rhs = g.weight() * (s.w.array() * (eta_c.array() * xi_c.array() - cov)).matrix();

  const ScalarField dw = (s.w.array() * eta_c.array()).matrix();
  const FaceField dw_face = face_average(g, dw);
  FaceField flux = g.zero_faces();
  for (int a = 0; a < g.dim(); ++a)
    for (int f = 0; f < g.face_count(a); ++f)
      flux[a][f] = g.is_boundary_face(a, f) ? 0.0 : dw_face[a][f] * base.grad_psi[a][f];
  // G^T diag(omega) F = -omega div F when F vanishes on the boundary.
  rhs += g.weight() * divergence(g, flux);
  return rhs;
}

inline NeumannSolution solve_linearized(const Grid& g, const CoordState& s, const WeightedOperator& op,
                                        const ScalarField& eta, const ScalarField& xi, const NeumannSolution& base,
                                        double tol = kDefaultSolverTolerance) {
  return solve_rhs(g, op, linearized_forcing(g, s, eta, xi, base), tol);
}

inline NeumannSolution solve_linearized(const Grid& g, const CoordState& s, const ScalarField& eta,
                                        const ScalarField& xi, const NeumannSolution& base,
                                        double tol = kDefaultSolverTolerance) {
  return solve_linearized(g, s, assemble(g, s), eta, xi, base, tol);
}

}  // namespace bhflow
