#pragma once

// Bayes-Hilbert coordinates relative to the uniform reference measure:
// centered log-ratio transform, exponential normalization, and weighted
// moments under rho_h.

#include <cmath>
#include <limits>
#include <string>

#include "bhflow/grid.hpp"

namespace bhflow {

/// A clr coordinate h (nu0-mean zero) together with its density
/// w = d rho_h / d nu0 and log Z(h) = log of the nu0-integral of e^h.
struct CoordState {
  ScalarField h;
  ScalarField w;
  double log_z = 0.0;
};

struct AdmissibilityReport {
  bool admissible = true;
  double min_density = 0.0;
  double max_density = 0.0;
};

/// Pointwise density bounds c_lo <= w <= c_hi defining the admissible class.
struct AdmissibleBounds {
  double lo = 1e-3;
  double hi = 1e3;

  AdmissibleBounds() = default;
  AdmissibleBounds(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo > 0.0 && lo < hi)) throw InputError("admissible bounds: need 0 < c_lo < c_hi");
  }

  AdmissibilityReport check(const CoordState& s) const {
    AdmissibilityReport r;
    r.min_density = s.w.minCoeff();
    r.max_density = s.w.maxCoeff();
    r.admissible = r.min_density >= lo && r.max_density <= hi;
    return r;
  }
  bool admits(const CoordState& s) const { return check(s).admissible; }
};

/// rho_h = e^h / Z(h) nu0. h is centered first; the maximum is subtracted
/// before exponentiation and cancels in the normalization.
inline CoordState exp_normalize(const Grid& g, const ScalarField& h) {
  g.check(h, "exp_normalize");
  if (!h.allFinite()) throw InputError("exp_normalize: non-finite coordinate value");
  CoordState s;
  s.h = project_mean_zero(g, h);
  const double m = s.h.maxCoeff();
  s.w = (s.h.array() - m).exp().matrix();
  const double z_shifted = integrate(g, s.w);
  s.w /= z_shifted;
  s.log_z = m + std::log(z_shifted);
  return s;
}

/// Centered log of a positive density (any positive multiple gives the same
/// coordinate).
inline ScalarField clr(const Grid& g, const ScalarField& w) {
  g.check(w, "clr");
  if (!(w.array() > 0.0).all()) throw DomainError("clr: density must be strictly positive");
  return project_mean_zero(g, w.array().log().matrix());
}

inline double mean_under(const CoordState& s, const ScalarField& f) {
  if (f.size() != s.w.size()) throw ShapeError("mean_under: field/state size mismatch");
  return f.dot(s.w) / static_cast<double>(s.w.size());
}

/// Cov_rho(f, g) = E_rho[(f - E f)(g - E g)].
inline double cov_under(const CoordState& s, const ScalarField& f, const ScalarField& g) {
  if (f.size() != s.w.size() || g.size() != s.w.size()) throw ShapeError("cov_under: field/state size mismatch");
  const double mf = mean_under(s, f);
  const double mg = mean_under(s, g);
  return ((f.array() - mf) * (g.array() - mg) * s.w.array()).sum() / static_cast<double>(s.w.size());
}

/// f - E_rho[f].
inline ScalarField center_under(const CoordState& s, const ScalarField& f) {
  return (f.array() - mean_under(s, f)).matrix();
}

/// Time derivative of log(d rho_t / d nu0) along a coordinate path with
/// velocity hdot: hdot - E_rho[hdot].
inline ScalarField log_density_rate(const CoordState& s, const ScalarField& hdot) { return center_under(s, hdot); }

/// Derivative of w along h + eps * xi at eps = 0: w (xi - E_rho[xi]).
inline ScalarField density_differential(const CoordState& s, const ScalarField& xi) {
  return (s.w.array() * center_under(s, xi).array()).matrix();
}

/// Bayes-Hilbert distance between two states, i.e. the L2(nu0) distance of
/// their clr coordinates.
inline double bayes_hilbert_distance(const Grid& g, const CoordState& a, const CoordState& b) {
  return l2_norm(g, a.h - b.h);
}

}  // namespace bhflow
