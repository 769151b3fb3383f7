#pragma once

// Feature observations through a Markov kernel: G(h) = E_{rho_h}[K zeta_j],
// the reduced Jacobian J(a), the observability Gram J^T J and the local
// observability constant kappa, measured against the L2(nu0) norm on V_m.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bhflow/reduction.hpp"

namespace bhflow {

enum class KernelKind { identity, gaussian };

struct ObservationModel {
  KernelKind kernel = KernelKind::identity;
  double bandwidth = 0.0;
  std::vector<ScalarField> features;
  /// K zeta_j: the kernel applied to each feature once, so every observation
  /// is a plain rho-expectation.
  std::vector<ScalarField> effective;

  int dimension() const { return static_cast<int>(features.size()); }
};

/// Row-stochastic truncated Gaussian on cell centers (cut at 4 sigma).
inline SparseMatrix smoothing_kernel(const Grid& g, double sigma) {
  if (!(sigma > 0.0)) throw InputError("gaussian kernel: bandwidth must be positive");
  const double cut = 4.0 * sigma;
  std::vector<Eigen::Triplet<double>> trip;
  const int rx = static_cast<int>(std::ceil(cut / g.spacing(0)));
  const int ry = g.dim() == 2 ? static_cast<int>(std::ceil(cut / g.spacing(1))) : 0;
  for (int c = 0; c < g.size(); ++c) {
    const int ic = g.index_x(c), jc = g.index_y(c);
    std::vector<std::pair<int, double>> row;
    double total = 0.0;
    for (int j = std::max(0, jc - ry); j <= std::min(g.cells(1) - 1, jc + ry); ++j)
      for (int i = std::max(0, ic - rx); i <= std::min(g.cells(0) - 1, ic + rx); ++i) {
        const int d = g.cell(i, j);
        double r2 = std::pow(g.center(0, c) - g.center(0, d), 2);
        if (g.dim() == 2) r2 += std::pow(g.center(1, c) - g.center(1, d), 2);
        if (r2 > cut * cut) continue;
        const double v = std::exp(-0.5 * r2 / (sigma * sigma));
        row.emplace_back(d, v);
        total += v;
      }
    for (auto [d, v] : row) trip.emplace_back(c, d, v / total);
  }
  SparseMatrix K(g.size(), g.size());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

inline ObservationModel make_observation_model(const Grid& g, std::vector<ScalarField> features,
                                               KernelKind kernel = KernelKind::identity, double bandwidth = 0.0) {
  if (features.empty()) throw InputError("observation: at least one feature required");
  ObservationModel m;
  m.kernel = kernel;
  m.bandwidth = bandwidth;
  SparseMatrix K;
  if (kernel == KernelKind::gaussian) K = smoothing_kernel(g, bandwidth);
  for (auto& f : features) {
    g.check(f, "feature");
    if (!f.allFinite()) throw InputError("observation: non-finite feature value");
    m.effective.push_back(kernel == KernelKind::gaussian ? ScalarField(K * f) : f);
    m.features.push_back(std::move(f));
  }
  return m;
}

/// x_i, x_i^2, ..., x_i^p for each axis.
inline std::vector<ScalarField> monomial_features(const Grid& g, int p) {
  if (p < 1) throw InputError("monomials: degree must be positive");
  std::vector<ScalarField> out;
  for (int a = 0; a < g.dim(); ++a)
    for (int k = 1; k <= p; ++k)
      out.push_back(g.sample([a, k](double x, double y) { return std::pow(a == 0 ? x : y, k); }));
  return out;
}

/// cos(k pi u_i), k = 1..q, with u_i the axis coordinate rescaled to [0, 1].
inline std::vector<ScalarField> fourier_features(const Grid& g, int q) {
  if (q < 1) throw InputError("fourier_features: count must be positive");
  std::vector<ScalarField> out;
  for (int a = 0; a < g.dim(); ++a)
    for (int k = 1; k <= q; ++k) {
      const double lo = g.extent(a).lo, len = g.extent(a).length();
      out.push_back(g.sample([=](double x, double y) {
        return std::cos(k * std::numbers::pi * ((a == 0 ? x : y) - lo) / len);
      }));
    }
  return out;
}

inline Eigen::VectorXd observe(const ObservationModel& model, const CoordState& s) {
  Eigen::VectorXd out(model.dimension());
  for (int j = 0; j < model.dimension(); ++j) out[j] = mean_under(s, model.effective[j]);
  return out;
}

struct ObservabilityReport {
  Eigen::MatrixXd J;
  Eigen::MatrixXd gram;
  double kappa = 0.0;
  double sigma_max = 0.0;
  /// sigma_max / kappa; infinite when kappa is zero.
  double condition = 0.0;
  bool observable = false;
};

/// Smallest singular value of J G^{-1/2}, i.e. the best constant in
/// |J alpha| >= kappa ||sum alpha_k phi_k||_{L2(nu0)}. Zero when r < m.
inline ObservabilityReport observability(const Eigen::MatrixXd& J, const Eigen::MatrixXd& basis_gram) {
  ObservabilityReport rep;
  rep.J = J;
  rep.gram = J.transpose() * J;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis_gram);
  const Eigen::MatrixXd inv_sqrt =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd M = J * inv_sqrt;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const Eigen::VectorXd sv = svd.singularValues();
  rep.sigma_max = sv.size() ? sv.maxCoeff() : 0.0;
  rep.kappa = (J.rows() < J.cols() || sv.size() == 0) ? 0.0 : sv.minCoeff();
  // Roundoff-level singular values are treated as exact zeros.
  rep.observable = rep.kappa > 1e-12 * std::max(1.0, rep.sigma_max);
  if (!rep.observable) rep.kappa = 0.0;
  rep.condition = rep.kappa > 0.0 ? rep.sigma_max / rep.kappa : std::numeric_limits<double>::infinity();
  return rep;
}

/// J_jk = Cov_rho(K zeta_j, phi_k), the derivative of observe(state_of(a)).
inline Eigen::MatrixXd observation_matrix(const Basis& basis, const ObservationModel& model, const CoordState& s) {
  Eigen::MatrixXd J(model.dimension(), basis.size());
  for (int j = 0; j < model.dimension(); ++j)
    for (int k = 0; k < basis.size(); ++k) J(j, k) = cov_under(s, model.effective[j], basis.functions[k]);
  return J;
}

inline ObservabilityReport observation_jacobian(const Grid& g, const Basis& basis, const ObservationModel& model,
                                                const Eigen::VectorXd& a) {
  return observability(observation_matrix(basis, model, state_of(g, basis, a)), basis.gram);
}

struct StabilityRecord {
  double data_gap = 0.0;   ///< ||G(a1) - G(a2)||
  double state_gap = 0.0;  ///< ||h(a1) - h(a2)||_{L2(nu0)}
  double kappa = 0.0;      ///< local observability constant (min over the two states)
  double ratio = 0.0;      ///< data_gap / state_gap (0 when both vanish)
  bool observable = false;
  /// data_gap >= (kappa / 2) state_gap; vacuously true when kappa = 0.
  bool holds = true;
};

namespace detail {

inline double coefficient_l2(const Basis& basis, const Eigen::VectorXd& d) { return std::sqrt(std::max(0.0, d.dot(basis.gram * d))); }

inline void finish_record(StabilityRecord& r) {
  r.ratio = r.state_gap > 0.0 ? r.data_gap / r.state_gap : 0.0;
  r.observable = r.kappa > 0.0;
  r.holds = !r.observable || r.data_gap >= 0.5 * r.kappa * r.state_gap;
}

}  // namespace detail

inline StabilityRecord stability_check(const Grid& g, const Basis& basis, const ObservationModel& model,
                                       const Eigen::VectorXd& a1, const Eigen::VectorXd& a2,
                                       const AdmissibleBounds& bounds = {}) {
  const CoordState s1 = state_of(g, basis, a1), s2 = state_of(g, basis, a2);
  if (!bounds.admits(s1) || !bounds.admits(s2)) throw DomainError("stability_check: inadmissible state");
  StabilityRecord r;
  r.data_gap = (observe(model, s1) - observe(model, s2)).norm();
  r.state_gap = detail::coefficient_l2(basis, a1 - a2);
  r.kappa = std::min(observability(observation_matrix(basis, model, s1), basis.gram).kappa,
                     observability(observation_matrix(basis, model, s2), basis.gram).kappa);
  detail::finish_record(r);
  return r;
}

/// Pathwise version: both sides integrated in L2(0, T) by the trapezoid rule,
/// kappa the minimum along both paths.
inline StabilityRecord stability_check(const Grid& g, const Basis& basis, const ObservationModel& model,
                                       const CoefficientPath& p1, const CoefficientPath& p2,
                                       const AdmissibleBounds& bounds = {}) {
  if (p1.nodes() != p2.nodes() || p1.dim() != p2.dim()) throw ShapeError("stability_check: path sampling differs");
  std::vector<double> data(p1.nodes()), state(p1.nodes());
  double kappa = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p1.nodes(); ++i) {
    const StabilityRecord r = stability_check(g, basis, model, p1.at(i), p2.at(i), bounds);
    data[i] = r.data_gap * r.data_gap;
    state[i] = r.state_gap * r.state_gap;
    kappa = std::min(kappa, r.kappa);
  }
  StabilityRecord r;
  r.data_gap = std::sqrt(trapezoid(data, p1.dt()));
  r.state_gap = std::sqrt(trapezoid(state, p1.dt()));
  r.kappa = kappa;
  detail::finish_record(r);
  return r;
}

/// Largest radius s <= max_radius (found by bisection) such that the bound
/// ||G(c) - G(c + s d)|| >= (kappa/2) ||h(s d)|| holds at every probed
/// radius, d = direction / |direction|.
inline double stability_radius(const Grid& g, const Basis& basis, const ObservationModel& model,
                               const Eigen::VectorXd& center, const Eigen::VectorXd& direction, double max_radius,
                               int iterations = 40) {
  const Eigen::VectorXd d = direction.normalized();
  auto holds = [&](double s) {
    try {
      return stability_check(g, basis, model, center, center + s * d).holds;
    } catch (const DomainError&) {
      return false;
    }
  };
  if (holds(max_radius)) return max_radius;
  double lo = 0.0, hi = max_radius;
  for (int k = 0; k < iterations; ++k) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace bhflow
