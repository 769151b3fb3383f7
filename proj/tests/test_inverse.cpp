#include <chrono>
#include <random>

#include <gtest/gtest.h>

#include "bhflow/inverse.hpp"
#include "test_util.hpp"

using namespace bhflow;

namespace {

/// a(t) = (0.5 - 0.8 t + 0.3 t^2, -0.3 + 0.6 t) on [0, 1].
CoefficientPath demo_truth(int nodes) {
  Eigen::MatrixXd powers(3, 2);
  powers << 0.5, -0.3, -0.8, 0.6, 0.3, 0.0;
  return CoefficientPath::polynomial(powers, nodes);
}

InverseProblem demo_problem(int cells, int nodes, double lambda) {
  const Grid g = Grid::line({0, 1}, cells);
  InverseProblem p(g, fourier_basis(g, 2), make_observation_model(g, monomial_features(g, 2)));
  p.lambda = lambda;
  p.data = make_synthetic(p, demo_truth(nodes), 0.0, 0);
  return p;
}

/// Max-norm relative error of the analytic gradient against central
/// differences of the objective.
double gradient_error(const InverseProblem& p, const CoefficientPath& path, double step) {
  const Eigen::MatrixXd g = gradient(p, path);
  Eigen::MatrixXd fd(g.rows(), g.cols());
  for (int i = 0; i < path.nodes(); ++i)
    for (int k = 0; k < path.dim(); ++k) {
      CoefficientPath plus = path, minus = path;
      plus.coeffs(i, k) += step;
      minus.coeffs(i, k) -= step;
      fd(i, k) = (objective(p, plus).total - objective(p, minus).total) / (2 * step);
    }
  return (fd - g).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Objective, ConsistentDataAndConstantPath) {
  InverseProblem p = demo_problem(64, 9, 0.0);
  const ObjectiveBreakdown b = objective(p, demo_truth(9));
  EXPECT_LT(b.data, 1e-28);
  EXPECT_EQ(b.transport, 0.0);

  p.lambda = 1.0;
  const CoefficientPath still = CoefficientPath::linear(Eigen::Vector2d(0.2, 0.1), Eigen::Vector2d(0.2, 0.1), 9);
  EXPECT_EQ(objective(p, still).transport, 0.0);
  // Constant path: the transport gradient vanishes, so the gradient is the data part alone.
  InverseProblem q = p;
  q.lambda = 0.0;
  EXPECT_LT((gradient(p, still) - gradient(q, still)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Objective, NodePerturbationMatchesJacobianQuadratic) {
  const InverseProblem p = demo_problem(128, 9, 0.0);
  const CoefficientPath truth = demo_truth(9);
  const int node = 4;
  const Eigen::Vector2d dir(0.6, -0.8);
  const Eigen::MatrixXd J = observation_jacobian(p.grid, p.basis, p.model, truth.at(node)).J;
  for (double eps : {1e-2, 5e-3}) {
    CoefficientPath pert = truth;
    pert.coeffs.row(node) += eps * dir.transpose();
    const double predicted = 0.5 * p.dt() * (J * (eps * dir)).squaredNorm();
    EXPECT_LT(std::abs(objective(p, pert).data - predicted), 2.0 * std::pow(eps, 3));
  }
}

TEST(Objective, InadmissiblePathIsInfinite) {
  InverseProblem p = demo_problem(64, 5, 1e-2);
  p.bounds = AdmissibleBounds(0.5, 2.0);
  const CoefficientPath far = CoefficientPath::linear(Eigen::Vector2d::Zero(), Eigen::Vector2d(3.0, 0.0), 5);
  const ObjectiveBreakdown b = objective(p, far);
  EXPECT_FALSE(b.admissible);
  EXPECT_TRUE(std::isinf(b.total));
  EXPECT_THROW(gradient(p, far), DomainError);
  EXPECT_THROW(objective(p, demo_truth(6)), ShapeError);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomProblems) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick_m(1, 3), pick_n(3, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int m = pick_m(rng), nodes = pick_n(rng);
    const Grid g = trial % 5 == 4 ? Grid::rectangle({0, 1}, {0, 1}, 8, 8) : Grid::line({0, 1}, 48);
    const Basis b = trial % 2 ? legendre_basis(g, m) : fourier_basis(g, m);
    const ObservationModel model = trial % 3 == 0
                                       ? make_observation_model(g, fourier_features(g, 2), KernelKind::gaussian, 0.1)
                                       : make_observation_model(g, monomial_features(g, 2));
    InverseProblem p(g, b, model, 0.5 + 0.5 * (u(rng) + 1.0));
    p.lambda = std::pow(10.0, -2.0 + u(rng));
    p.mu = trial % 4 == 1 ? 0.1 : 0.0;
    p.gamma = trial % 4 == 2 ? 0.05 : 0.0;
    Eigen::MatrixXd coeffs(nodes, m), data(nodes, model.dimension());
    for (auto& v : coeffs.reshaped()) v = 0.6 * u(rng);
    for (auto& v : data.reshaped()) v = 0.3 + 0.2 * u(rng);
    p.data = data;
    const double err = gradient_error(p, CoefficientPath(p.horizon, coeffs), 1e-5);
    EXPECT_LT(err, 1e-5) << "trial " << trial;
    worst = std::max(worst, err);
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Gradient, StationaryAtNoiseFreeMinimum) {
  InverseProblem p = demo_problem(64, 9, 0.0);
  EXPECT_LT(gradient(p, demo_truth(9)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Synthetic, DeterministicAndCalibrated) {
  InverseProblem p = demo_problem(32, 5, 1e-3);
  const CoefficientPath truth = demo_truth(5);
  const Eigen::MatrixXd clean = make_synthetic(p, truth, 0.0, 7);
  EXPECT_EQ(clean, p.data);
  EXPECT_EQ(make_synthetic(p, truth, 0.1, 7), make_synthetic(p, truth, 0.1, 7));
  EXPECT_NE(make_synthetic(p, truth, 0.1, 7), make_synthetic(p, truth, 0.1, 8));

  double s = 0.0, s2 = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double z = counter_normal(99, k);
    s += z;
    s2 += z * z;
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 1.0, 0.05);
  EXPECT_NEAR(s / n, 0.0, 0.05);

  const double sigma = 0.02;
  const Grid g = Grid::line({0, 1}, 16);
  InverseProblem wide(g, fourier_basis(g, 1), make_observation_model(g, monomial_features(g, 1)));
  const CoefficientPath flat = CoefficientPath::linear(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), n);
  const Eigen::MatrixXd noisy = make_synthetic(wide, flat, sigma, 3);
  const Eigen::ArrayXd e = noisy.col(0).array() - noisy.col(0).mean();
  EXPECT_NEAR(std::sqrt(e.square().mean()), sigma, 0.05 * sigma);
}

TEST(Solve, ZeroNoiseRecovery) {
  const auto start = std::chrono::steady_clock::now();
  const InverseProblem p = demo_problem(128, 32, 1e-6);
  const CoefficientPath truth = demo_truth(32);
  const RecoveryReport rep = solve_inverse(p, default_initial_path(p), truth);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_TRUE(rep.errors.has_value());
  EXPECT_LT(rep.errors->coefficient_sup, 1e-3);
  EXPECT_TRUE(rep.converged) << rep.termination;
  EXPECT_TRUE(rep.observable);
  EXPECT_GT(rep.kappa_min, 0.0);
  for (std::size_t k = 1; k < rep.history.size(); ++k) EXPECT_LE(rep.history[k], rep.history[k - 1]);
  EXPECT_LT(seconds, 120.0);
  RecordProperty("sup_error", std::to_string(rep.errors->coefficient_sup));
}

TEST(Solve, UnobservableFeaturesFlagged) {
  const Grid g = Grid::line({0, 1}, 32);
  InverseProblem p(g, fourier_basis(g, 2), make_observation_model(g, {g.constant(1.0), g.constant(2.0)}));
  p.lambda = 1e-2;
  p.data = make_synthetic(p, demo_truth(6), 0.0, 0);
  const CoefficientPath init = CoefficientPath::linear(Eigen::Vector2d(0.1, 0.0), Eigen::Vector2d(-0.2, 0.3), 6);
  const RecoveryReport rep = solve_inverse(p, init);
  EXPECT_FALSE(rep.observable);
  EXPECT_EQ(rep.kappa_min, 0.0);
  EXPECT_LT(rep.breakdown.transport, objective(p, init).transport);
  EXPECT_LT(rep.breakdown.data, 1e-20);
}

TEST(Solve, LambdaSweepActionNonIncreasing) {
  InverseProblem p = demo_problem(48, 9, 1e-3);
  p.data = make_synthetic(p, demo_truth(9), 0.02, 5);
  const auto rows = sweep_lambda(p, {1e-3, 1e-2, 1e-1});
  ASSERT_EQ(rows.size(), 3u);
  for (int k = 1; k < 3; ++k) {
    EXPECT_LE(rows[k].action, rows[k - 1].action * (1.0 + 1e-9));
    EXPECT_GE(rows[k].data_misfit, rows[k - 1].data_misfit * (1.0 - 1e-9));
  }
  EXPECT_THROW(sweep_lambda(p, {0.0}), InputError);
}

TEST(Solve, NoiseStudySlopeWithinBound) {
  const InverseProblem p = demo_problem(48, 9, 1e-10);
  const NoiseStudy study = noise_scaling_study(p, demo_truth(9), {0.0, 1e-3, 1e-2}, {1, 2, 3});
  EXPECT_LT(study.mean_error[0], 1e-7);
  EXPECT_LE(study.mean_error[1], study.mean_error[2]);
  EXPECT_GT(study.kappa_min, 0.0);
  EXPECT_TRUE(study.within_bound) << study.slope << " vs " << 1.5 * study.bound;
}
