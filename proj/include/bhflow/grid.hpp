#pragma once

// Cell-centered tensor-product grids on intervals and rectangles, carrying
// the uniform reference probability measure nu0 = |Omega|^-1 dx.
//
// Cell values live in a ScalarField (index c = j * nx + i). Face values live
// in a FaceField with one block per axis:
//   axis 0: (nx + 1) * ny faces, index j * (nx + 1) + i, face i sits between
//           cells i - 1 and i;
//   axis 1: nx * (ny + 1) faces, index j * nx + i.
// Boundary faces are stored explicitly so the zero-flux condition can be
// asserted on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <type_traits>
#include <utility>

#include <Eigen/Core>

#include "bhflow/errors.hpp"

namespace bhflow {

using ScalarField = Eigen::VectorXd;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

/// Face-centered vector field, one normal component per face per axis.
struct FaceField {
  int dim = 1;
  std::array<Eigen::VectorXd, 2> axis;

  Eigen::VectorXd& operator[](int a) { return axis[a]; }
  const Eigen::VectorXd& operator[](int a) const { return axis[a]; }

  FaceField& operator+=(const FaceField& o) {
    for (int a = 0; a < dim; ++a) axis[a] += o.axis[a];
    return *this;
  }
  FaceField& operator-=(const FaceField& o) {
    for (int a = 0; a < dim; ++a) axis[a] -= o.axis[a];
    return *this;
  }
  FaceField& operator*=(double s) {
    for (int a = 0; a < dim; ++a) axis[a] *= s;
    return *this;
  }
  friend FaceField operator+(FaceField l, const FaceField& r) { return l += r; }
  friend FaceField operator-(FaceField l, const FaceField& r) { return l -= r; }
  friend FaceField operator*(double s, FaceField f) { return f *= s; }

  double max_abs() const {
    double m = 0.0;
    for (int a = 0; a < dim; ++a)
      if (axis[a].size() > 0) m = std::max(m, axis[a].cwiseAbs().maxCoeff());
    return m;
  }
};

class Grid {
 public:
  static Grid line(Interval x, int cells) { return Grid(1, {x, Interval{0.0, 1.0}}, {cells, 1}); }

  static Grid rectangle(Interval x, Interval y, int nx, int ny) { return Grid(2, {x, y}, {nx, ny}); }

  int dim() const { return dim_; }
  int cells(int axis) const { return n_[axis]; }
  int size() const { return n_[0] * n_[1]; }
  const Interval& extent(int axis) const { return ext_[axis]; }
  double spacing(int axis) const { return ext_[axis].length() / n_[axis]; }

  double cell_volume() const {
    double v = spacing(0);
    if (dim_ == 2) v *= spacing(1);
    return v;
  }
  double volume() const {
    double v = ext_[0].length();
    if (dim_ == 2) v *= ext_[1].length();
    return v;
  }

  /// nu0 mass of one cell; these sum to one.
  double weight() const { return 1.0 / size(); }

  int cell(int i, int j = 0) const { return j * n_[0] + i; }
  int index_x(int c) const { return c % n_[0]; }
  int index_y(int c) const { return c / n_[0]; }

  /// Cell-center coordinate along an axis.
  double center(int axis, int c) const {
    const int k = axis == 0 ? index_x(c) : index_y(c);
    return ext_[axis].lo + (k + 0.5) * spacing(axis);
  }

  int face_count(int axis) const {
    return axis == 0 ? (n_[0] + 1) * n_[1] : n_[0] * (n_[1] + 1);
  }
  bool is_boundary_face(int axis, int f) const {
    if (axis == 0) {
      const int i = f % (n_[0] + 1);
      return i == 0 || i == n_[0];
    }
    const int j = f / n_[0];
    return j == 0 || j == n_[1];
  }
  /// Face quadrature weight: interior faces carry a full cell weight,
  /// boundary faces half of one.
  double face_weight(int axis, int f) const {
    return is_boundary_face(axis, f) ? 0.5 * weight() : weight();
  }

  /// Evaluate f(x) (1D) or f(x, y) (2D) at cell centers.
  template <class F>
  ScalarField sample(F&& f) const {
    ScalarField out(size());
    for (int c = 0; c < size(); ++c) {
      if constexpr (std::is_invocable_v<F, double, double>) {
        out[c] = f(center(0, c), dim_ == 2 ? center(1, c) : 0.0);
      } else {
        out[c] = f(center(0, c));
      }
    }
    return out;
  }

  ScalarField constant(double v) const { return ScalarField::Constant(size(), v); }

  FaceField zero_faces() const {
    FaceField f;
    f.dim = dim_;
    for (int a = 0; a < dim_; ++a) f.axis[a] = Eigen::VectorXd::Zero(face_count(a));
    return f;
  }

  void check(const ScalarField& f, const char* what = "field") const {
    if (f.size() != size())
      throw ShapeError(std::string(what) + ": expected " + std::to_string(size()) + " cells, got " +
                       std::to_string(f.size()));
  }
  void check(const FaceField& f, const char* what = "face field") const {
    bool ok = f.dim == dim_;
    for (int a = 0; ok && a < dim_; ++a) ok = f.axis[a].size() == face_count(a);
    if (!ok) throw ShapeError(std::string(what) + ": layout does not match grid");
  }

 private:
  Grid(int dim, std::array<Interval, 2> ext, std::array<int, 2> n) : dim_(dim), ext_(ext), n_(n) {
    for (int a = 0; a < dim_; ++a) {
      if (!(ext_[a].hi > ext_[a].lo)) throw InputError("grid: extent must satisfy lo < hi");
      if (n_[a] < 4) throw InputError("grid: at least 4 cells per axis required");
    }
  }

  int dim_;
  std::array<Interval, 2> ext_;
  std::array<int, 2> n_;
};

/// nu0-integral by the midpoint rule.
inline double integrate(const Grid& g, const ScalarField& f) {
  g.check(f);
  return f.sum() * g.weight();
}

inline ScalarField project_mean_zero(const Grid& g, const ScalarField& f) {
  return (f.array() - integrate(g, f)).matrix();
}

/// Central differences across interior faces; boundary faces are zero
/// (reflecting ghost cells).
inline FaceField gradient(const Grid& g, const ScalarField& f) {
  g.check(f);
  FaceField out = g.zero_faces();
  const int nx = g.cells(0), ny = g.cells(1);
  const double dx = g.spacing(0);
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i) out[0][j * (nx + 1) + i] = (f[g.cell(i, j)] - f[g.cell(i - 1, j)]) / dx;
  if (g.dim() == 2) {
    const double dy = g.spacing(1);
    for (int j = 1; j < ny; ++j)
      for (int i = 0; i < nx; ++i) out[1][j * nx + i] = (f[g.cell(i, j)] - f[g.cell(i, j - 1)]) / dy;
  }
  return out;
}

/// Discrete divergence; the negative adjoint of gradient() under the
/// cell/face quadrature pairings whenever the boundary flux vanishes.
inline ScalarField divergence(const Grid& g, const FaceField& F) {
  g.check(F);
  ScalarField out = ScalarField::Zero(g.size());
  const int nx = g.cells(0), ny = g.cells(1);
  const double dx = g.spacing(0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out[g.cell(i, j)] = (F[0][j * (nx + 1) + i + 1] - F[0][j * (nx + 1) + i]) / dx;
  if (g.dim() == 2) {
    const double dy = g.spacing(1);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) out[g.cell(i, j)] += (F[1][(j + 1) * nx + i] - F[1][j * nx + i]) / dy;
  }
  return out;
}

/// Arithmetic average of a cell field onto faces. Boundary faces take the
/// value of their single neighbour.
inline FaceField face_average(const Grid& g, const ScalarField& f) {
  g.check(f);
  FaceField out = g.zero_faces();
  const int nx = g.cells(0), ny = g.cells(1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const double left = f[g.cell(std::max(i - 1, 0), j)];
      const double right = f[g.cell(std::min(i, nx - 1), j)];
      out[0][j * (nx + 1) + i] = 0.5 * (left + right);
    }
  if (g.dim() == 2)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double below = f[g.cell(i, std::max(j - 1, 0))];
        const double above = f[g.cell(i, std::min(j, ny - 1))];
        out[1][j * nx + i] = 0.5 * (below + above);
      }
  return out;
}

/// Face quadrature of sum_axes weight * a * b.
inline double face_inner(const Grid& g, const FaceField& a, const FaceField& b, const FaceField* weight = nullptr) {
  g.check(a);
  g.check(b);
  double s = 0.0;
  for (int ax = 0; ax < g.dim(); ++ax)
    for (int f = 0; f < g.face_count(ax); ++f) {
      const double w = weight ? (*weight)[ax][f] : 1.0;
      s += g.face_weight(ax, f) * w * a[ax][f] * b[ax][f];
    }
  return s;
}

inline double cell_inner(const Grid& g, const ScalarField& a, const ScalarField& b) {
  g.check(a);
  g.check(b);
  return a.dot(b) * g.weight();
}

inline double l2_norm(const Grid& g, const ScalarField& f) { return std::sqrt(cell_inner(g, f, f)); }

/// Discrete H^1 norm: sqrt(||u||^2_{L2(nu0)} + ||grad u||^2_faces).
inline double h1_norm(const Grid& g, const ScalarField& u) {
  const FaceField du = gradient(g, u);
  return std::sqrt(cell_inner(g, u, u) + face_inner(g, du, du));
}

}  // namespace bhflow
