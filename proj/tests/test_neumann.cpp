#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "bhflow/neumann.hpp"
#include "test_util.hpp"

using namespace bhflow;
using bhflow::testing::kPi;
using bhflow::testing::random_smooth;

namespace {

double max_error_against_closed_form(int n, double* h1_error = nullptr) {
  const Grid g = Grid::line({0, 1}, n);
  const CoordState s = exp_normalize(g, g.constant(0.0));
  const NeumannSolution sol = solve(g, s, g.sample([](double x) { return std::cos(kPi * x); }));
  const ScalarField exact = g.sample([](double x) { return std::cos(kPi * x) / (kPi * kPi); });
  if (h1_error) *h1_error = h1_norm(g, sol.psi - exact);
  return (sol.psi - exact).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Assemble, UnweightedInteriorRow) {
  const Grid g = Grid::line({0, 1}, 10);
  const WeightedOperator op = assemble(g, exp_normalize(g, g.constant(0.0)));
  const Eigen::MatrixXd A(op.matrix);
  const double scale = g.weight() / (g.spacing(0) * g.spacing(0));
  EXPECT_NEAR(A(4, 3), -scale, 1e-12);
  EXPECT_NEAR(A(4, 4), 2 * scale, 1e-12);
  EXPECT_NEAR(A(4, 5), -scale, 1e-12);
  EXPECT_NEAR(A(0, 0), scale, 1e-12);
}

TEST(Assemble, SymmetricWithConstantKernelAndPsd) {
  std::mt19937_64 rng(11);
  for (const Grid& g : {Grid::line({0, 1}, 40), Grid::rectangle({0, 2}, {0, 1}, 9, 7)}) {
    for (int t = 0; t < 5; ++t) {
      const CoordState s = exp_normalize(g, random_smooth(g, rng, 1.0));
      const WeightedOperator op = assemble(g, s);
      const Eigen::MatrixXd A(op.matrix);
      EXPECT_EQ((A - A.transpose()).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_LT((A * Eigen::VectorXd::Ones(g.size())).cwiseAbs().maxCoeff(), 1e-10 * A.cwiseAbs().maxCoeff());
      for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd f = bhflow::testing::random_vector(g, rng);
        EXPECT_GT(f.dot(A * f), 0.0);
      }
      const Eigen::VectorXd one = Eigen::VectorXd::Ones(g.size());
      EXPECT_NEAR(one.dot(A * one), 0.0, 1e-9);
    }
  }
}

TEST(Assemble, RejectsNonPositiveDensity) {
  const Grid g = Grid::line({0, 1}, 8);
  CoordState s = exp_normalize(g, g.constant(0.0));
  s.w[2] = 0.0;
  EXPECT_THROW(assemble(g, s), DomainError);
}

TEST(NeumannSolve, ConstantDirectionGivesZeroPotential) {
  const Grid g = Grid::line({0, 1}, 64);
  std::mt19937_64 rng(12);
  const CoordState s = exp_normalize(g, random_smooth(g, rng));
  const NeumannSolution sol = solve(g, s, g.constant(3.5));
  EXPECT_LT(sol.psi.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NeumannSolve, ClosedFormCosine) {
  double h1_coarse = 0.0, h1_fine = 0.0;
  const double coarse = max_error_against_closed_form(256, &h1_coarse);
  const double fine = max_error_against_closed_form(512, &h1_fine);
  EXPECT_LT(fine, 1e-4);
  EXPECT_GE(coarse / fine, 3.5);
  EXPECT_GE(h1_coarse / h1_fine, 1.9);
}

TEST(NeumannSolve, Linearity) {
  const Grid g = Grid::line({0, 1}, 128);
  std::mt19937_64 rng(13);
  const CoordState s = exp_normalize(g, random_smooth(g, rng));
  const ScalarField x1 = random_smooth(g, rng), x2 = random_smooth(g, rng);
  const ScalarField lhs = solve(g, s, 2.0 * x1 - 0.7 * x2).psi;
  const ScalarField rhs = 2.0 * solve(g, s, x1).psi - 0.7 * solve(g, s, x2).psi;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(NeumannSolve, GaugeFluxAndWeakResidual) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 16, 16);
  std::mt19937_64 rng(14);
  const CoordState s = exp_normalize(g, random_smooth(g, rng));
  const ScalarField xi = random_smooth(g, rng);
  const WeightedOperator op = assemble(g, s);
  const NeumannSolution sol = solve(g, s, op, xi);
  EXPECT_NEAR(sol.psi.mean(), 0.0, 1e-12);
  for (int a = 0; a < 2; ++a)
    for (int f = 0; f < g.face_count(a); ++f)
      if (g.is_boundary_face(a, f)) EXPECT_EQ(sol.grad_psi[a][f], 0.0);
  // Weak residual against every cell indicator.
  const Eigen::VectorXd b = neumann_forcing(g, s, xi);
  const Eigen::VectorXd r = b - op.apply(sol.psi);
  EXPECT_LE(r.norm(), 1e-10 * b.norm() * 1.0001);
  EXPECT_LE(sol.residual, 1e-10);
}

TEST(NeumannSolve, MatchesDenseFactorization) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 20, 12);
  std::mt19937_64 rng(15);
  const CoordState s = exp_normalize(g, random_smooth(g, rng, 1.0));
  const ScalarField xi = random_smooth(g, rng);
  const WeightedOperator op = assemble(g, s);
  // Oracle: dense LDLT of A + 1 1^T, which is nonsingular and agrees with A
  // on mean-zero vectors.
  Eigen::MatrixXd A(op.matrix);
  A += Eigen::MatrixXd::Ones(g.size(), g.size());
  Eigen::VectorXd psi = A.ldlt().solve(neumann_forcing(g, s, xi));
  psi.array() -= psi.mean();
  const NeumannSolution sol = solve(g, s, op, xi, 1e-12);
  EXPECT_LT((sol.psi - psi).cwiseAbs().maxCoeff(), 1e-8 * psi.cwiseAbs().maxCoeff());
}

TEST(NeumannSolve, StagnationRaisesConvergenceError) {
  const Grid g = Grid::line({0, 1}, 64);
  const CoordState s = exp_normalize(g, g.constant(0.0));
  const WeightedOperator op = assemble(g, s);
  int it = 0;
  double res = 0.0;
  EXPECT_THROW(solve_mean_zero(op, neumann_forcing(g, s, g.sample([](double x) { return x * x * x; })), 1e-12, it,
                               res, 3),
               ConvergenceError);
}

TEST(NeumannSolve, MinimumEnergyOrthogonality) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 12, 10);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0.0, 1.0);
  const CoordState s = exp_normalize(g, random_smooth(g, rng));
  const WeightedOperator op = assemble(g, s);
  const NeumannSolution sol = solve(g, s, op, random_smooth(g, rng), 1e-13);
  const FaceField wf = face_average(g, s.w);
  for (int trial = 0; trial < 5; ++trial) {
    // Competitor v = grad psi + d with d weakly divergence-free under rho:
    // d = u - grad phi where phi is the weighted projection of u.
    FaceField u = g.zero_faces();
    for (int a = 0; a < 2; ++a)
      for (int f = 0; f < g.face_count(a); ++f)
        if (!g.is_boundary_face(a, f)) u[a][f] = n(rng);
    FaceField flux = u;
    for (int a = 0; a < 2; ++a) flux[a] = flux[a].cwiseProduct(wf[a]);
    const Eigen::VectorXd rhs = -g.weight() * divergence(g, flux);
    const NeumannSolution phi = solve_rhs(g, op, rhs, 1e-13);
    const FaceField d = u - phi.grad_psi;
    const FaceField v = sol.grad_psi + d;
    const double cross = face_inner(g, d, sol.grad_psi, &wf);
    const double e_psi = face_inner(g, sol.grad_psi, sol.grad_psi, &wf);
    EXPECT_NEAR(cross, 0.0, 1e-10);
    EXPECT_GT(face_inner(g, v, v, &wf), e_psi);
  }
}

TEST(NeumannSolve, StabilityEstimateIsBounded) {
  const Grid g = Grid::line({0, 1}, 128);
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const ScalarField h = random_smooth(g, rng, 1.0), xi = random_smooth(g, rng, 1.0);
    const double scale = t % 2 ? 1e-2 : 1e-1;
    const ScalarField dh = random_smooth(g, rng, scale), dxi = random_smooth(g, rng, scale);
    const ScalarField psi1 = solve(g, exp_normalize(g, h), xi).psi;
    const ScalarField psi2 = solve(g, exp_normalize(g, h + dh), xi + dxi).psi;
    const double denom = project_mean_zero(g, dh).cwiseAbs().maxCoeff() + l2_norm(g, dxi);
    worst = std::max(worst, h1_norm(g, psi1 - psi2) / denom);
  }
  EXPECT_LT(worst, 5.0);
}

TEST(NeumannSolve, GridConvergenceOrders) {
  double h1_prev = 0.0, max_prev = 0.0;
  for (int n : {32, 64, 128}) {
    double h1 = 0.0;
    const double mx = max_error_against_closed_form(n, &h1);
    if (h1_prev > 0.0) {
      EXPECT_GT(std::log2(h1_prev / h1), 0.9);
      EXPECT_GT(std::log2(max_prev / mx), 1.9);
    }
    h1_prev = h1;
    max_prev = mx;
  }
}

TEST(Linearized, DegenerateDirectionsGiveZero) {
  const Grid g = Grid::line({0, 1}, 64);
  std::mt19937_64 rng(18);
  const CoordState s = exp_normalize(g, random_smooth(g, rng));
  const ScalarField xi = random_smooth(g, rng);
  const NeumannSolution base = solve(g, s, xi);
  EXPECT_LT(solve_linearized(g, s, g.constant(2.0), xi, base).psi.cwiseAbs().maxCoeff(), 1e-14);
  const ScalarField c = g.constant(1.0);
  EXPECT_LT(solve_linearized(g, s, random_smooth(g, rng), c, solve(g, s, c)).psi.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Linearized, MatchesCentralDifferenceOfForwardSolve) {
  const Grid g = Grid::line({0, 1}, 512);
  std::mt19937_64 rng(19);
  const double eps = 1e-4;
  for (int t = 0; t < 4; ++t) {
    const ScalarField h = random_smooth(g, rng, 1.0), eta = random_smooth(g, rng, 1.0),
                      xi = random_smooth(g, rng, 1.0);
    const CoordState s = exp_normalize(g, h);
    const NeumannSolution base = solve(g, s, xi, 1e-12);
    const ScalarField chi = solve_linearized(g, s, eta, xi, base, 1e-12).psi;
    const ScalarField fd =
        (solve(g, exp_normalize(g, h + eps * eta), xi, 1e-12).psi - solve(g, exp_normalize(g, h - eps * eta), xi, 1e-12).psi) /
        (2 * eps);
    EXPECT_LT(h1_norm(g, fd - chi), 1e-4);
  }
}

TEST(Linearized, TwoDimensionalFiniteDifference) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 16, 16);
  std::mt19937_64 rng(20);
  const double eps = 1e-4;
  const ScalarField h = random_smooth(g, rng, 1.0), eta = random_smooth(g, rng, 1.0), xi = random_smooth(g, rng, 1.0);
  const CoordState s = exp_normalize(g, h);
  const ScalarField chi = solve_linearized(g, s, eta, xi, solve(g, s, xi, 1e-12), 1e-12).psi;
  const ScalarField fd =
      (solve(g, exp_normalize(g, h + eps * eta), xi, 1e-12).psi - solve(g, exp_normalize(g, h - eps * eta), xi, 1e-12).psi) /
      (2 * eps);
  EXPECT_LT(h1_norm(g, fd - chi), 1e-6);
}
