#pragma once

// Lagrangian check of the canonical dynamics: sample rho at t = 0, advect
// particles under v_t = sum_k adot_k T phi_k, compare the ensemble with rho_T.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "bhflow/parallel.hpp"
#include "bhflow/random.hpp"
#include "bhflow/reduction.hpp"

namespace bhflow {

using Point = std::array<double, 2>;

struct Ensemble {
  int dim = 1;
  std::vector<Point> positions;
  double time = 0.0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(positions.size()); }
};

namespace detail {

/// Inverts the piecewise-linear CDF of cell masses on a uniform partition of
/// [lo, lo + n * h]; cdf has n + 1 entries with cdf[0] = 0.
inline double invert_cell_cdf(const std::vector<double>& cdf, double lo, double h, double u) {
  const double target = u * cdf.back();
  auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), target);
  const int c = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin() - 1, static_cast<std::ptrdiff_t>(cdf.size()) - 2));
  const double mass = cdf[c + 1] - cdf[c];
  const double frac = mass > 0.0 ? std::clamp((target - cdf[c]) / mass, 0.0, 1.0) : 0.5;
  return lo + (c + frac) * h;
}

inline std::vector<double> running_sum(const std::vector<double>& masses) {
  std::vector<double> cdf(masses.size() + 1, 0.0);
  for (std::size_t i = 0; i < masses.size(); ++i) cdf[i + 1] = cdf[i] + masses[i];
  return cdf;
}

inline double reflect(double x, const Interval& iv) {
  // Mirror back into the interval; repeated for very large excursions.
  for (int k = 0; k < 8 && (x < iv.lo || x > iv.hi); ++k) x = x < iv.lo ? 2 * iv.lo - x : 2 * iv.hi - x;
  return std::clamp(x, iv.lo, iv.hi);
}

}  // namespace detail

/// Inverse-CDF sampling of the cellwise-constant density of s (conditional
/// per axis in 2D). Particle k uses counters 2k and 2k + 1 under seed.
inline Ensemble sample_initial(const Grid& g, const CoordState& s, int n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample_initial: need at least one particle");
  g.check(s.w, "sample_initial");
  Ensemble ens;
  ens.dim = g.dim();
  ens.seed = seed;
  ens.positions.resize(n);
  const int nx = g.cells(0), ny = g.cells(1);
  std::vector<double> col_mass(nx, 0.0);
  for (int c = 0; c < g.size(); ++c) col_mass[g.index_x(c)] += s.w[c];
  const std::vector<double> xcdf = detail::running_sum(col_mass);
  std::vector<std::vector<double>> ycdf;
  if (g.dim() == 2) {
    ycdf.resize(nx);
    for (int i = 0; i < nx; ++i) {
      std::vector<double> m(ny);
      for (int j = 0; j < ny; ++j) m[j] = s.w[g.cell(i, j)];
      ycdf[i] = detail::running_sum(m);
    }
  }
  parallel_for(n, [&](int k) {
    const double u1 = counter_uniform(seed, 2 * static_cast<std::uint64_t>(k));
    const double u2 = counter_uniform(seed, 2 * static_cast<std::uint64_t>(k) + 1);
    Point p{detail::invert_cell_cdf(xcdf, g.extent(0).lo, g.spacing(0), u1), 0.0};
    if (g.dim() == 2) {
      const int i = std::clamp(static_cast<int>((p[0] - g.extent(0).lo) / g.spacing(0)), 0, nx - 1);
      p[1] = detail::invert_cell_cdf(ycdf[i], g.extent(1).lo, g.spacing(1), u2);
    }
    ens.positions[k] = p;
  });
  return ens;
}

/// Evaluates a face velocity at arbitrary points: linear in 1D, bilinear in
/// 2D on each component's staggered lattice, constant extrapolation across
/// the outer half cells in the tangential direction.
class FaceInterpolator {
 public:
  FaceInterpolator(const Grid& g, FaceField v) : g_(g), v_(std::move(v)) {}

  Point operator()(const Point& p) const {
    Point out{component(0, p), 0.0};
    if (g_.dim() == 2) out[1] = component(1, p);
    return out;
  }

 private:
  double component(int axis, const Point& p) const {
    const int other = 1 - axis;
    const int na = g_.cells(axis), no = g_.cells(other);
    // Along `axis` the faces sit at lo + i h, i = 0..na.
    const double sa = std::clamp((p[axis] - g_.extent(axis).lo) / g_.spacing(axis), 0.0, static_cast<double>(na));
    const int ia = std::min(static_cast<int>(sa), na - 1);
    const double fa = sa - ia;
    auto face = [&](int i, int j) {
      // i along `axis`, j along the other axis.
      if (axis == 0) return v_[0][j * (na + 1) + i];
      return v_[1][i * no + j];
    };
    if (g_.dim() == 1) return (1 - fa) * face(ia, 0) + fa * face(ia + 1, 0);
    // Across: faces at cell centers lo + (j + 1/2) h.
    const double so = std::clamp((p[other] - g_.extent(other).lo) / g_.spacing(other) - 0.5, 0.0, no - 1.0);
    const int jo = std::min(static_cast<int>(so), no - 2);
    const double fo = so - jo;
    return (1 - fa) * ((1 - fo) * face(ia, jo) + fo * face(ia, jo + 1)) +
           fa * ((1 - fo) * face(ia + 1, jo) + fo * face(ia + 1, jo + 1));
  }

  const Grid& g_;
  FaceField v_;
};

/// Canonical velocities at every path node (node rates as in the path).
inline std::vector<FaceField> node_velocities(const Grid& g, const Basis& basis, const CoefficientPath& path,
                                              double tol = kDefaultSolverTolerance) {
  const Eigen::MatrixXd rates = path.rates();
  std::vector<FaceField> v(path.nodes());
  parallel_for(path.nodes(), [&](int i) {
    v[i] = reduced_velocity(g, reduced_state(g, basis, path.at(i), tol), rates.row(i).transpose());
  });
  return v;
}

/// RK4 over [0, T] with `steps` uniform steps. Velocities are linear in time
/// between node fields; particles leaving the domain are reflected.
inline Ensemble advect(const Grid& g, const Basis& basis, const CoefficientPath& path, const Ensemble& ens, int steps,
                       double tol = kDefaultSolverTolerance) {
  if (steps < 1) throw InputError("advect: need at least one step");
  if (ens.dim != g.dim()) throw ShapeError("advect: ensemble dimension differs from grid");
  const std::vector<FaceField> fields = node_velocities(g, basis, path, tol);
  std::vector<FaceInterpolator> interp;
  interp.reserve(fields.size());
  for (const auto& f : fields) interp.emplace_back(g, f);

  const double dt_node = path.dt();
  auto velocity = [&](double t, const Point& x) {
    const double s = std::clamp(t / dt_node, 0.0, static_cast<double>(path.nodes() - 1));
    const int i = std::min(static_cast<int>(s), path.nodes() - 2);
    const double f = s - i;
    const Point a = interp[i](x), b = interp[i + 1](x);
    return Point{(1 - f) * a[0] + f * b[0], (1 - f) * a[1] + f * b[1]};
  };
  auto keep_inside = [&](Point x) {
    x[0] = detail::reflect(x[0], g.extent(0));
    if (g.dim() == 2) x[1] = detail::reflect(x[1], g.extent(1));
    return x;
  };
  auto axpy = [](const Point& x, double h, const Point& k) { return Point{x[0] + h * k[0], x[1] + h * k[1]}; };

  Ensemble out = ens;
  const double h = path.horizon / steps;
  parallel_for(out.size(), [&](int p) {
    Point x = out.positions[p];
    for (int n = 0; n < steps; ++n) {
      const double t = n * h;
      const Point k1 = velocity(t, x);
      const Point k2 = velocity(t + 0.5 * h, keep_inside(axpy(x, 0.5 * h, k1)));
      const Point k3 = velocity(t + 0.5 * h, keep_inside(axpy(x, 0.5 * h, k2)));
      const Point k4 = velocity(t + h, keep_inside(axpy(x, h, k3)));
      x = keep_inside(Point{x[0] + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                            x[1] + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])});
    }
    out.positions[p] = x;
  });
  out.time = ens.time + path.horizon;
  return out;
}

/// CDF along `axis` of the cellwise-constant density of s (the marginal in 2D).
inline std::function<double(double)> marginal_cdf(const Grid& g, const CoordState& s, int axis = 0) {
  std::vector<double> mass(g.cells(axis), 0.0);
  for (int c = 0; c < g.size(); ++c) mass[axis == 0 ? g.index_x(c) : g.index_y(c)] += s.w[c];
  std::vector<double> cdf = detail::running_sum(mass);
  for (double& v : cdf) v /= cdf.back();
  const double lo = g.extent(axis).lo, h = g.spacing(axis);
  return [cdf = std::move(cdf), lo, h](double x) {
    const double u = (x - lo) / h;
    if (u <= 0.0) return 0.0;
    const int n = static_cast<int>(cdf.size()) - 1;
    if (u >= n) return 1.0;
    const int c = static_cast<int>(u);
    return cdf[c] + (u - c) * (cdf[c + 1] - cdf[c]);
  };
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and a CDF.
inline double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw InputError("ks_distance: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
  }
  return d;
}

inline std::vector<double> coordinates(const Ensemble& ens, int axis = 0) {
  std::vector<double> out(ens.positions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ens.positions[i][axis];
  return out;
}

struct EnsembleMoment {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline EnsembleMoment ensemble_mean(const Ensemble& ens, const std::function<double(const Point&)>& f) {
  double s = 0.0, s2 = 0.0;
  for (const auto& p : ens.positions) {
    const double v = f(p);
    s += v;
    s2 += v * v;
  }
  const double n = ens.size();
  EnsembleMoment m;
  m.mean = s / n;
  m.standard_error = std::sqrt(std::max(0.0, s2 / n - m.mean * m.mean) / n);
  return m;
}

/// Header `x` (1D) or `x,y` (2D), one particle per row.
inline void write_ensemble_csv(std::ostream& os, const Ensemble& ens) {
  os.precision(17);
  os << (ens.dim == 2 ? "x,y\n" : "x\n");
  for (const auto& p : ens.positions) {
    os << p[0];
    if (ens.dim == 2) os << ',' << p[1];
    os << '\n';
  }
}

}  // namespace bhflow
