#pragma once

// Finite-dimensional subspaces V_m = span{phi_1..phi_m}: bases, coefficient
// paths a(t), the kinetic tensor H_kl(a) = g_{h(a)}(phi_k, phi_l) with its
// state derivative, and reduced canonical velocities.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bhflow/transport.hpp"

namespace bhflow {

enum class BasisFamily { fourier, legendre, custom };

inline const char* to_string(BasisFamily f) {
  switch (f) {
    case BasisFamily::fourier:
      return "fourier";
    case BasisFamily::legendre:
      return "legendre";
    case BasisFamily::custom:
      return "custom";
  }
  return "?";
}

struct Basis {
  std::vector<ScalarField> functions;
  /// L2(nu0) Gram matrix of the functions.
  Eigen::MatrixXd gram;
  BasisFamily family = BasisFamily::custom;

  int size() const { return static_cast<int>(functions.size()); }

  /// h(a) = sum_k a_k phi_k.
  ScalarField combine(const Eigen::VectorXd& a) const {
    if (a.size() != size()) throw ShapeError("basis: coefficient vector has wrong length");
    ScalarField h = ScalarField::Zero(functions.front().size());
    for (int k = 0; k < size(); ++k) h += a[k] * functions[k];
    return h;
  }
};

/// Centers the functions, builds the Gram matrix and rejects nearly
/// dependent families (smallest Gram eigenvalue <= 1e-8).
inline Basis make_basis(const Grid& g, std::vector<ScalarField> functions, BasisFamily family = BasisFamily::custom) {
  if (functions.empty()) throw InputError("basis: at least one function required");
  Basis b;
  b.family = family;
  const int m = static_cast<int>(functions.size());
  for (auto& f : functions) {
    g.check(f, "basis function");
    if (!f.allFinite()) throw InputError("basis: non-finite function value");
    b.functions.push_back(project_mean_zero(g, f));
  }
  b.gram.resize(m, m);
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l) b.gram(k, l) = cell_inner(g, b.functions[k], b.functions[l]);
  const double smallest = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b.gram).eigenvalues().minCoeff();
  if (!(smallest > 1e-8))
    throw InputError("basis: functions are linearly dependent (smallest Gram eigenvalue " + std::to_string(smallest) +
                     ")");
  return b;
}

namespace detail {

/// Cell-center coordinate rescaled to [0, 1].
inline double unit_coord(const Grid& g, int axis, int c) {
  return (g.center(axis, c) - g.extent(axis).lo) / g.extent(axis).length();
}

/// Multi-indices (p, q) != (0, 0) ordered by total degree, then by p
/// descending; 1D grids use q = 0 only.
inline std::vector<std::pair<int, int>> mode_order(const Grid& g, int m) {
  std::vector<std::pair<int, int>> out;
  if (g.dim() == 1) {
    for (int k = 1; k <= m; ++k) out.emplace_back(k, 0);
    return out;
  }
  for (int total = 1; static_cast<int>(out.size()) < m; ++total)
    for (int p = total; p >= 0 && static_cast<int>(out.size()) < m; --p) out.emplace_back(p, total - p);
  return out;
}

inline double shifted_legendre(int k, double u) {
  // Bonnet recursion on x = 2u - 1, normalized to unit L2 norm on [0, 1].
  const double x = 2.0 * u - 1.0;
  double p0 = 1.0, p1 = x;
  if (k == 0) return 1.0;
  for (int n = 1; n < k; ++n) {
    const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return std::sqrt(2.0 * k + 1.0) * p1;
}

}  // namespace detail

/// Cosine basis sqrt(2) cos(k pi u) (1D) or tensor cosines (2D), with u the
/// coordinate rescaled to [0, 1].
inline Basis fourier_basis(const Grid& g, int m) {
  if (m < 1) throw InputError("fourier basis: size must be positive");
  std::vector<ScalarField> fs;
  for (auto [p, q] : detail::mode_order(g, m)) {
    ScalarField f(g.size());
    for (int c = 0; c < g.size(); ++c) {
      double v = p == 0 ? 1.0 : std::sqrt(2.0) * std::cos(p * std::numbers::pi * detail::unit_coord(g, 0, c));
      if (g.dim() == 2 && q > 0) v *= std::sqrt(2.0) * std::cos(q * std::numbers::pi * detail::unit_coord(g, 1, c));
      f[c] = v;
    }
    fs.push_back(std::move(f));
  }
  return make_basis(g, std::move(fs), BasisFamily::fourier);
}

/// Shifted, normalized Legendre polynomials of degree >= 1 (tensor products
/// in 2D), centered under nu0.
inline Basis legendre_basis(const Grid& g, int m) {
  if (m < 1) throw InputError("legendre basis: size must be positive");
  std::vector<ScalarField> fs;
  for (auto [p, q] : detail::mode_order(g, m)) {
    ScalarField f(g.size());
    for (int c = 0; c < g.size(); ++c) {
      double v = detail::shifted_legendre(p, detail::unit_coord(g, 0, c));
      if (g.dim() == 2) v *= detail::shifted_legendre(q, detail::unit_coord(g, 1, c));
      f[c] = v;
    }
    fs.push_back(std::move(f));
  }
  return make_basis(g, std::move(fs), BasisFamily::legendre);
}

/// Time-sampled coefficient trajectory on uniform nodes over [0, T]; rows are
/// nodes, columns basis coefficients. Interpolated piecewise linearly.
struct CoefficientPath {
  double horizon = 1.0;
  Eigen::MatrixXd coeffs;

  CoefficientPath() = default;
  CoefficientPath(double T, Eigen::MatrixXd a) : horizon(T), coeffs(std::move(a)) {
    if (!(T > 0.0)) throw InputError("path: horizon must be positive");
    if (coeffs.rows() < 3) throw InputError("path: at least 3 time nodes required");
    if (!coeffs.allFinite()) throw InputError("path: non-finite coefficient");
  }

  int nodes() const { return static_cast<int>(coeffs.rows()); }
  int dim() const { return static_cast<int>(coeffs.cols()); }
  double dt() const { return horizon / (nodes() - 1); }
  double time(int i) const { return i * dt(); }
  Eigen::VectorXd at(int i) const { return coeffs.row(i).transpose(); }

  Eigen::VectorXd at_time(double t) const {
    const double s = std::clamp(t / dt(), 0.0, static_cast<double>(nodes() - 1));
    const int i = std::min(static_cast<int>(s), nodes() - 2);
    const double f = s - i;
    return ((1.0 - f) * coeffs.row(i) + f * coeffs.row(i + 1)).transpose();
  }

  /// Node rates: central differences inside, one-sided at the endpoints.
  Eigen::MatrixXd rates() const {
    Eigen::MatrixXd r(nodes(), dim());
    const double h = dt();
    r.row(0) = (coeffs.row(1) - coeffs.row(0)) / h;
    r.row(nodes() - 1) = (coeffs.row(nodes() - 1) - coeffs.row(nodes() - 2)) / h;
    for (int i = 1; i + 1 < nodes(); ++i) r.row(i) = (coeffs.row(i + 1) - coeffs.row(i - 1)) / (2.0 * h);
    return r;
  }

  /// Straight line a(t) = (1 - t/T) a0 + (t/T) a1, a Fisher-Rao geodesic in
  /// clr coordinates.
  static CoefficientPath linear(const Eigen::VectorXd& a0, const Eigen::VectorXd& a1, int nodes, double T = 1.0) {
    if (a0.size() != a1.size()) throw ShapeError("path: endpoint sizes differ");
    if (nodes < 3) throw InputError("path: at least 3 time nodes required");
    Eigen::MatrixXd c(nodes, a0.size());
    for (int i = 0; i < nodes; ++i) {
      const double s = static_cast<double>(i) / (nodes - 1);
      c.row(i) = ((1.0 - s) * a0 + s * a1).transpose();
    }
    return {T, c};
  }

  /// a(t) = sum_p t^p C.row(p).
  static CoefficientPath polynomial(const Eigen::MatrixXd& powers, int nodes, double T = 1.0) {
    if (nodes < 3) throw InputError("path: at least 3 time nodes required");
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nodes, powers.cols());
    for (int i = 0; i < nodes; ++i) {
      const double t = T * i / (nodes - 1);
      double tp = 1.0;
      for (int p = 0; p < powers.rows(); ++p, tp *= t) c.row(i) += tp * powers.row(p);
    }
    return {T, c};
  }
};

inline CoordState state_of(const Grid& g, const Basis& basis, const Eigen::VectorXd& a) {
  return exp_normalize(g, basis.combine(a));
}

struct PathAdmissibility {
  bool admissible = true;
  int offending_node = -1;
  double min_density = 0.0;
  double max_density = 0.0;
};

inline PathAdmissibility check_path(const Grid& g, const Basis& basis, const CoefficientPath& path,
                                    const AdmissibleBounds& bounds) {
  PathAdmissibility r;
  r.min_density = 1e300;
  r.max_density = 0.0;
  for (int i = 0; i < path.nodes(); ++i) {
    const AdmissibilityReport rep = bounds.check(state_of(g, basis, path.at(i)));
    r.min_density = std::min(r.min_density, rep.min_density);
    r.max_density = std::max(r.max_density, rep.max_density);
    if (!rep.admissible && r.admissible) {
      r.admissible = false;
      r.offending_node = i;
    }
  }
  return r;
}

/// State at a and the Neumann potentials psi_k = psi_{h(a), phi_k}, one per
/// basis function. Every reduced quantity at a is built from these.
struct ReducedState {
  CoordState state;
  WeightedOperator op;
  std::vector<NeumannSolution> potentials;
};

inline ReducedState reduced_state(const Grid& g, const Basis& basis, const Eigen::VectorXd& a,
                                  double tol = kDefaultSolverTolerance) {
  ReducedState r;
  r.state = state_of(g, basis, a);
  r.op = assemble(g, r.state);
  r.potentials.reserve(basis.size());
  for (const auto& phi : basis.functions) r.potentials.push_back(solve(g, r.state, r.op, phi, tol));
  return r;
}

struct KineticTensor {
  Eigen::MatrixXd H;
  /// dH[j](k, l) = derivative of H_kl(a) along e_j. Empty unless requested.
  std::vector<Eigen::MatrixXd> dH;
};

inline Eigen::MatrixXd kinetic_matrix(const Grid& g, const ReducedState& r) {
  const int m = static_cast<int>(r.potentials.size());
  Eigen::MatrixXd H(m, m);
  for (int k = 0; k < m; ++k)
    for (int l = k; l < m; ++l)
      H(k, l) = H(l, k) = rho_face_inner(g, r.state, r.potentials[k].grad_psi, r.potentials[l].grad_psi);
  return H;
}

/// dH via the adjoint pairing: with chi_{jk} solving A chi = f_{jk} (the
/// linearized forcing), int grad chi_{jk} . grad psi_l d rho = psi_l^T f_{jk},
/// so no linearized solves are needed.
inline std::vector<Eigen::MatrixXd> kinetic_derivative(const Grid& g, const Basis& basis, const ReducedState& r) {
  const int m = basis.size();
  std::vector<Eigen::MatrixXd> dH(m, Eigen::MatrixXd(m, m));
  for (int j = 0; j < m; ++j) {
    const FaceField weight_rate = face_average(g, density_differential(r.state, basis.functions[j]));
    // pair(k, l) = psi_l^T f_{jk}
    Eigen::MatrixXd pair(m, m);
    for (int k = 0; k < m; ++k) {
      const Eigen::VectorXd f = linearized_forcing(g, r.state, basis.functions[j], basis.functions[k], r.potentials[k]);
      for (int l = 0; l < m; ++l) pair(k, l) = r.potentials[l].psi.dot(f);
    }
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l) {
        const double measure =
            face_inner(g, r.potentials[k].grad_psi, r.potentials[l].grad_psi, &weight_rate);
        dH[j](k, l) = dH[j](l, k) = measure + pair(k, l) + pair(l, k);
      }
  }
  return dH;
}

inline KineticTensor kinetic_tensor(const Grid& g, const Basis& basis, const Eigen::VectorXd& a, bool with_derivative,
                                    double tol = kDefaultSolverTolerance) {
  const ReducedState r = reduced_state(g, basis, a, tol);
  KineticTensor kt;
  kt.H = kinetic_matrix(g, r);
  if (with_derivative) kt.dH = kinetic_derivative(g, basis, r);
  return kt;
}

/// v = sum_k adot_k T_{h(a)} phi_k.
inline FaceField reduced_velocity(const Grid& g, const ReducedState& r, const Eigen::VectorXd& adot) {
  if (adot.size() != static_cast<int>(r.potentials.size())) throw ShapeError("reduced_velocity: rate has wrong length");
  FaceField v = g.zero_faces();
  for (int k = 0; k < adot.size(); ++k)
    for (int ax = 0; ax < g.dim(); ++ax) v[ax] += adot[k] * r.potentials[k].grad_psi[ax];
  return v;
}

inline FaceField reduced_velocity(const Grid& g, const Basis& basis, const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& adot, double tol = kDefaultSolverTolerance) {
  return reduced_velocity(g, reduced_state(g, basis, a, tol), adot);
}

/// Trapezoid in time of (beta_i - adot_i)^T H(a_i) (beta_i - adot_i), with
/// adot the node rates of the path. beta has one row per node.
inline double reduced_flow_match_loss(const Grid& g, const Basis& basis, const CoefficientPath& path,
                                      const Eigen::MatrixXd& beta, double tol = kDefaultSolverTolerance,
                                      std::vector<double>* pointwise = nullptr) {
  if (beta.rows() != path.nodes() || beta.cols() != path.dim())
    throw ShapeError("reduced_flow_match_loss: candidate sampling does not match the path");
  const Eigen::MatrixXd rates = path.rates();
  std::vector<double> values(path.nodes());
  for (int i = 0; i < path.nodes(); ++i) {
    const Eigen::VectorXd d = (beta.row(i) - rates.row(i)).transpose();
    if (d.isZero(0.0)) {
      values[i] = 0.0;
      continue;
    }
    values[i] = d.dot(kinetic_tensor(g, basis, path.at(i), false, tol).H * d);
  }
  if (pointwise) *pointwise = values;
  return trapezoid(values, path.dt());
}

}  // namespace bhflow
