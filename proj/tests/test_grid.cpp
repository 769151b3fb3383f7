#include <random>

#include <gtest/gtest.h>

#include "bhflow/grid.hpp"
#include "test_util.hpp"

using namespace bhflow;
using bhflow::testing::kPi;

TEST(Grid, QuadratureIsPartitionOfUnity) {
  EXPECT_EQ(integrate(Grid::line({0, 1}, 37), Grid::line({0, 1}, 37).constant(1.0)), 1.0);
  const Grid g2 = Grid::rectangle({-1, 2}, {0, 0.5}, 12, 9);
  EXPECT_NEAR(integrate(g2, g2.constant(1.0)), 1.0, 1e-15);
}

TEST(Grid, CosineIntegratesToZeroBySymmetry) {
  const Grid g = Grid::line({0, 1}, 256);
  EXPECT_NEAR(integrate(g, g.sample([](double x) { return std::cos(kPi * x); })), 0.0, 1e-12);
}

TEST(Grid, SquareIntegratesToOneThird) {
  const Grid g = Grid::line({0, 1}, 256);
  EXPECT_NEAR(integrate(g, g.sample([](double x) { return x * x; })), 1.0 / 3.0, 2e-6);
}

TEST(Grid, MidpointRuleIsSecondOrder) {
  double prev = 0.0;
  for (int n : {16, 32, 64, 128}) {
    const Grid g = Grid::line({0, 1}, n);
    const double err = std::abs(integrate(g, g.sample([](double x) { return std::exp(x); })) - (std::exp(1.0) - 1.0));
    if (prev > 0.0) EXPECT_GE(prev / err, 3.9);
    prev = err;
  }
}

TEST(Grid, ProjectMeanZero) {
  const Grid g = Grid::line({0, 1}, 64);
  EXPECT_LT(project_mean_zero(g, g.constant(5.0)).cwiseAbs().maxCoeff(), 1e-14);
  const ScalarField c = g.sample([](double x) { return std::cos(kPi * x); });
  EXPECT_LT((project_mean_zero(g, c) - c).cwiseAbs().maxCoeff(), 1e-14);
  const ScalarField x = g.sample([](double x) { return x; });
  const ScalarField centered = project_mean_zero(g, x);
  EXPECT_LT((centered - g.sample([](double x) { return x - 0.5; })).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(integrate(g, centered), 0.0, 1e-15);
}

TEST(Grid, GradientOfConstantAndLinear) {
  const Grid g = Grid::line({0, 1}, 20);
  EXPECT_EQ(gradient(g, g.constant(3.0)).max_abs(), 0.0);
  const FaceField d = gradient(g, g.sample([](double x) { return x; }));
  for (int f = 1; f < 20; ++f) EXPECT_NEAR(d[0][f], 1.0, 1e-12);
  EXPECT_EQ(d[0][0], 0.0);
  EXPECT_EQ(d[0][20], 0.0);

  const Grid g2 = Grid::rectangle({0, 1}, {0, 2}, 8, 6);
  const FaceField d2 = gradient(g2, g2.sample([](double x, double y) { return 2 * x - y; }));
  for (int f = 0; f < g2.face_count(0); ++f)
    if (!g2.is_boundary_face(0, f)) EXPECT_NEAR(d2[0][f], 2.0, 1e-12);
  for (int f = 0; f < g2.face_count(1); ++f)
    if (!g2.is_boundary_face(1, f)) EXPECT_NEAR(d2[1][f], -1.0, 1e-12);
}

namespace {

FaceField random_interior_flux(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FaceField F = g.zero_faces();
  for (int a = 0; a < g.dim(); ++a)
    for (int f = 0; f < g.face_count(a); ++f)
      if (!g.is_boundary_face(a, f)) F[a][f] = n(rng);
  return F;
}

void check_adjoint(const Grid& g) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const ScalarField f = bhflow::testing::random_vector(g, rng);
    const FaceField F = random_interior_flux(g, rng);
    const double lhs = face_inner(g, gradient(g, f), F);
    const double rhs = -cell_inner(g, f, divergence(g, F));
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(lhs)));
  }
}

}  // namespace

TEST(Grid, GradientDivergenceAdjointness) {
  check_adjoint(Grid::line({0, 1}, 33));
  check_adjoint(Grid::rectangle({0, 1}, {-1, 1}, 7, 11));
}

TEST(Grid, AdjointnessAsMatrixTranspose) {
  // Assemble G and D column by column and compare W_f G with -(W_c D)^T on
  // interior faces.
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 5, 4);
  const int nc = g.size();
  const int nf0 = g.face_count(0), nf1 = g.face_count(1);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nf0 + nf1, nc);
  for (int c = 0; c < nc; ++c) {
    ScalarField e = ScalarField::Zero(nc);
    e[c] = 1.0;
    const FaceField gc = gradient(g, e);
    G.col(c) << gc[0], gc[1];
  }
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(nc, nf0 + nf1);
  for (int f = 0; f < nf0 + nf1; ++f) {
    FaceField e = g.zero_faces();
    const int axis = f < nf0 ? 0 : 1;
    const int idx = f < nf0 ? f : f - nf0;
    if (g.is_boundary_face(axis, idx)) continue;
    e[axis][idx] = 1.0;
    D.col(f) = divergence(g, e);
  }
  Eigen::VectorXd wf(nf0 + nf1);
  for (int f = 0; f < nf0; ++f) wf[f] = g.face_weight(0, f);
  for (int f = 0; f < nf1; ++f) wf[nf0 + f] = g.face_weight(1, f);
  const Eigen::MatrixXd lhs = wf.asDiagonal() * G;
  const Eigen::MatrixXd rhs = -(g.weight() * D).transpose();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Grid, RejectsBadInputs) {
  EXPECT_THROW(Grid::line({0, 1}, 3), InputError);
  EXPECT_THROW(Grid::line({1, 0}, 8), InputError);
  const Grid g = Grid::line({0, 1}, 8);
  EXPECT_THROW(integrate(g, ScalarField::Zero(7)), ShapeError);
}
