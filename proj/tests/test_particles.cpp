#include <sstream>

#include <gtest/gtest.h>

#include "bhflow/particles.hpp"
#include "test_util.hpp"

using namespace bhflow;
using bhflow::testing::kPi;

namespace {

/// Uniform to w proportional to exp(cos pi x): a_1 goes from 0 to 1/sqrt2.
CoefficientPath fisher_rao_demo(int nodes) {
  return CoefficientPath::linear(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0 / std::sqrt(2.0)), nodes);
}

}  // namespace

TEST(Sampling, UniformPassesKs) {
  const Grid g = Grid::line({0, 1}, 64);
  const CoordState s = exp_normalize(g, g.constant(0.0));
  const int n = 10000;
  const Ensemble ens = sample_initial(g, s, n, 5);
  EXPECT_LT(ks_distance(coordinates(ens), [](double x) { return std::clamp(x, 0.0, 1.0); }), 1.63 / std::sqrt(n));
  for (const auto& p : ens.positions) {
    EXPECT_GE(p[0], 0.0);
    EXPECT_LE(p[0], 1.0);
  }
  EXPECT_EQ(sample_initial(g, s, 100, 5).positions, sample_initial(g, s, 100, 5).positions);
  EXPECT_NE(sample_initial(g, s, 100, 5).positions, sample_initial(g, s, 100, 6).positions);
  EXPECT_THROW(sample_initial(g, s, 0, 1), InputError);
}

TEST(Sampling, TwoDimensionalMarginalsAndBounds) {
  const Grid g = Grid::rectangle({0, 2}, {-1, 1}, 24, 16);
  const CoordState s = exp_normalize(g, g.sample([](double x, double y) { return std::cos(kPi * x / 2) + 0.5 * y; }));
  const Ensemble ens = sample_initial(g, s, 20000, 9);
  for (const auto& p : ens.positions) {
    EXPECT_TRUE(p[0] >= 0.0 && p[0] <= 2.0);
    EXPECT_TRUE(p[1] >= -1.0 && p[1] <= 1.0);
  }
  EXPECT_LT(ks_distance(coordinates(ens, 0), marginal_cdf(g, s, 0)), 1.63 / std::sqrt(20000.0));
  EXPECT_LT(ks_distance(coordinates(ens, 1), marginal_cdf(g, s, 1)), 1.63 / std::sqrt(20000.0));
}

TEST(Advect, StationaryPathLeavesParticlesInPlace) {
  const Grid g = Grid::line({0, 1}, 32);
  const Basis b = fourier_basis(g, 2);
  const CoefficientPath still = CoefficientPath::linear(Eigen::Vector2d(0.3, 0.1), Eigen::Vector2d(0.3, 0.1), 5);
  const Ensemble e0 = sample_initial(g, state_of(g, b, still.at(0)), 500, 1);
  const Ensemble e1 = advect(g, b, still, e0, 16);
  ASSERT_EQ(e1.size(), e0.size());
  for (int i = 0; i < e0.size(); ++i) EXPECT_NEAR(e1.positions[i][0], e0.positions[i][0], 1e-10);
  EXPECT_DOUBLE_EQ(e1.time, 1.0);
}

TEST(Advect, FisherRaoTerminalLaw) {
  const Grid g = Grid::line({0, 1}, 256);
  const Basis b = fourier_basis(g, 1);
  const CoefficientPath path = fisher_rao_demo(33);
  const int n = 20000;
  const Ensemble e0 = sample_initial(g, state_of(g, b, path.at(0)), n, 2024);
  const Ensemble e1 = advect(g, b, path, e0, 128);
  EXPECT_EQ(e1.size(), n);

  // Target CDF of exp(cos pi x) by independent fine quadrature.
  const int fine = 20000;
  std::vector<double> cum(fine + 1, 0.0);
  for (int k = 0; k < fine; ++k) cum[k + 1] = cum[k] + std::exp(std::cos(kPi * (k + 0.5) / fine));
  auto target = [&](double x) {
    const double u = std::clamp(x, 0.0, 1.0) * fine;
    const int k = std::min(static_cast<int>(u), fine - 1);
    return (cum[k] + (u - k) * (cum[k + 1] - cum[k])) / cum[fine];
  };
  const double ks = ks_distance(coordinates(e1), target);
  EXPECT_LT(ks, 0.02);

  // Weak-form consistency on the test battery at T.
  const CoordState sT = state_of(g, b, path.at(path.nodes() - 1));
  const std::vector<std::function<double(double)>> tests = {
      [](double x) { return x; }, [](double x) { return x * x; }, [](double x) { return std::cos(kPi * x); },
      [](double x) { return std::cos(2 * kPi * x); }};
  for (const auto& f : tests) {
    const EnsembleMoment m = ensemble_mean(e1, [&](const Point& p) { return f(p[0]); });
    EXPECT_NEAR(m.mean, mean_under(sT, g.sample(f)), 3.0 * m.standard_error + 1e-4);
  }
}

TEST(Advect, KsShrinksWithEnsembleSize) {
  const Grid g = Grid::line({0, 1}, 128);
  const Basis b = fourier_basis(g, 1);
  const CoefficientPath path = fisher_rao_demo(17);
  const auto cdf = marginal_cdf(g, state_of(g, b, path.at(16)));
  auto ks_for = [&](int n) {
    const Ensemble e1 = advect(g, b, path, sample_initial(g, state_of(g, b, path.at(0)), n, 77), 64);
    return ks_distance(coordinates(e1), cdf);
  };
  EXPECT_LT(ks_for(10000), ks_for(1000));
}

TEST(Advect, TwoDimensionalMassStaysInside) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 16, 16);
  const Basis b = fourier_basis(g, 3);
  const CoefficientPath path = CoefficientPath::linear(Eigen::Vector3d::Zero(), Eigen::Vector3d(0.6, -0.5, 0.4), 9);
  const Ensemble e1 = advect(g, b, path, sample_initial(g, state_of(g, b, path.at(0)), 4000, 3), 32);
  EXPECT_EQ(e1.size(), 4000);
  for (const auto& p : e1.positions) {
    EXPECT_TRUE(p[0] >= 0.0 && p[0] <= 1.0);
    EXPECT_TRUE(p[1] >= 0.0 && p[1] <= 1.0);
  }
  const CoordState sT = state_of(g, b, path.at(8));
  const EnsembleMoment mx = ensemble_mean(e1, [](const Point& p) { return p[0]; });
  EXPECT_NEAR(mx.mean, mean_under(sT, g.sample([](double x, double) { return x; })), 3.0 * mx.standard_error + 2e-3);
}

TEST(Ensemble, CsvDump) {
  Ensemble e;
  e.dim = 2;
  e.positions = {{0.25, 0.5}, {1.0, 0.0}};
  std::ostringstream os;
  write_ensemble_csv(os, e);
  EXPECT_EQ(os.str(), "x,y\n0.25,0.5\n1,0\n");
}
