#include <random>

#include <gtest/gtest.h>

#include "bhflow/bhspace.hpp"
#include "test_util.hpp"

using namespace bhflow;
using bhflow::testing::kPi;
using bhflow::testing::random_smooth;

namespace {

/// Composite Simpson rule on [0, 1], used as an independent oracle.
template <class F>
double simpson(F&& f, int n = 200000) {
  const double h = 1.0 / n;
  double s = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

}  // namespace

TEST(ExpNormalize, ZeroCoordinateIsReferenceMeasure) {
  const Grid g = Grid::line({0, 1}, 64);
  const CoordState s = exp_normalize(g, g.constant(0.0));
  EXPECT_LT((s.w.array() - 1.0).abs().maxCoeff(), 1e-15);
  EXPECT_EQ(s.log_z, 0.0);
}

TEST(ExpNormalize, CosineDensityMatchesQuadratureOracle) {
  const Grid g = Grid::line({0, 1}, 512);
  const CoordState s = exp_normalize(g, g.sample([](double x) { return std::cos(kPi * x); }));
  const double z = simpson([](double x) { return std::exp(std::cos(kPi * x)); });
  EXPECT_NEAR(z, 1.266066, 1e-6);
  EXPECT_NEAR(integrate(g, s.w), 1.0, 1e-10);
  const ScalarField oracle = g.sample([&](double x) { return std::exp(std::cos(kPi * x)) / z; });
  EXPECT_LT((s.w - oracle).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(s.log_z, std::log(z), 1e-9);
}

TEST(ExpNormalize, ShiftInvariance) {
  const Grid g = Grid::line({0, 1}, 100);
  std::mt19937_64 rng(1);
  const ScalarField h = random_smooth(g, rng, 2.0);
  const CoordState a = exp_normalize(g, h);
  const CoordState b = exp_normalize(g, (h.array() + 7.0).matrix());
  EXPECT_LT((a.w - b.w).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.h - b.h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExpNormalize, LargeAmplitudeDoesNotOverflow) {
  const Grid g = Grid::line({0, 1}, 50);
  const CoordState s = exp_normalize(g, g.sample([](double x) { return 800.0 * x; }));
  EXPECT_TRUE(s.w.allFinite());
  EXPECT_NEAR(integrate(g, s.w), 1.0, 1e-12);
}

TEST(ExpNormalize, RejectsNonFinite) {
  const Grid g = Grid::line({0, 1}, 8);
  ScalarField h = g.constant(0.0);
  h[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(exp_normalize(g, h), InputError);
}

TEST(Clr, Examples) {
  const Grid g = Grid::line({0, 1}, 128);
  EXPECT_LT(clr(g, g.constant(1.0)).cwiseAbs().maxCoeff(), 1e-15);
  std::mt19937_64 rng(2);
  const ScalarField w = exp_normalize(g, random_smooth(g, rng)).w;
  EXPECT_LT((clr(g, 3.0 * w) - clr(g, w)).cwiseAbs().maxCoeff(), 1e-14);
  const ScalarField h = g.sample([](double x) { return std::sqrt(2.0) * std::cos(2 * kPi * x); });
  EXPECT_LT((clr(g, exp_normalize(g, h).w) - h).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Clr, RejectsNonPositive) {
  const Grid g = Grid::line({0, 1}, 8);
  ScalarField w = g.constant(1.0);
  w[0] = 0.0;
  EXPECT_THROW(clr(g, w), DomainError);
}

TEST(Moments, CovarianceExamples) {
  const Grid g = Grid::line({0, 1}, 512);
  const CoordState uniform = exp_normalize(g, g.constant(0.0));
  const ScalarField c = g.sample([](double x) { return std::cos(kPi * x); });
  const ScalarField x = g.sample([](double x) { return x; });
  EXPECT_NEAR(cov_under(uniform, x, g.constant(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(cov_under(uniform, c, c), 0.5, 1e-6);
  EXPECT_NEAR(cov_under(uniform, x, std::sqrt(2.0) * c), -2.0 * std::sqrt(2.0) / (kPi * kPi), 1e-5);
}

TEST(Moments, CovarianceIsSymmetricBilinearPsd) {
  const Grid g = Grid::line({0, 1}, 64);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const CoordState s = exp_normalize(g, random_smooth(g, rng));
    const ScalarField f = random_smooth(g, rng), k = random_smooth(g, rng), l = random_smooth(g, rng);
    EXPECT_NEAR(cov_under(s, f, k), cov_under(s, k, f), 1e-15);
    EXPECT_NEAR(cov_under(s, 2.0 * f + l, k), 2.0 * cov_under(s, f, k) + cov_under(s, l, k), 1e-14);
    EXPECT_GE(cov_under(s, f, f), 0.0);
  }
}

TEST(LogDensityRate, Examples) {
  const Grid g = Grid::line({0, 1}, 256);
  const CoordState uniform = exp_normalize(g, g.constant(0.0));
  EXPECT_LT(log_density_rate(uniform, g.constant(4.0)).cwiseAbs().maxCoeff(), 1e-14);
  const ScalarField c = g.sample([](double x) { return std::cos(kPi * x); });
  EXPECT_LT((log_density_rate(uniform, c) - c).cwiseAbs().maxCoeff(), 1e-14);

  const CoordState s = exp_normalize(g, c);
  const ScalarField x = g.sample([](double x) { return x; });
  const ScalarField r = log_density_rate(s, x);
  // Oracle: direct weighted quadrature of x under rho.
  double ex = 0.0;
  for (int i = 0; i < g.size(); ++i) ex += x[i] * s.w[i] / g.size();
  EXPECT_LT((r - (x.array() - ex).matrix()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(mean_under(s, r), 0.0, 1e-10);
}

TEST(BayesHilbert, IsometryThroughRoundTrips) {
  const Grid g = Grid::line({0, 1}, 200);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const ScalarField h1 = project_mean_zero(g, random_smooth(g, rng, 1.5));
    const ScalarField h2 = project_mean_zero(g, random_smooth(g, rng, 1.5));
    const double direct = l2_norm(g, h1 - h2);
    const double via = l2_norm(g, clr(g, exp_normalize(g, h1).w) - clr(g, exp_normalize(g, h2).w));
    EXPECT_NEAR(direct, via, 1e-9);
  }
}

TEST(BayesHilbert, DifferentialMatchesFiniteDifference) {
  const Grid g = Grid::line({0, 1}, 128);
  std::mt19937_64 rng(5);
  const double eps = 1e-5;
  for (int t = 0; t < 10; ++t) {
    const ScalarField h = random_smooth(g, rng, 1.0);
    const ScalarField xi = random_smooth(g, rng, 1.0);
    const CoordState s = exp_normalize(g, h);
    const ScalarField fd = (exp_normalize(g, h + eps * xi).w - exp_normalize(g, h - eps * xi).w) / (2 * eps);
    const ScalarField an = density_differential(s, xi);
    EXPECT_LT(integrate(g, (fd - an).cwiseAbs()) / integrate(g, an.cwiseAbs()), 1e-5);
  }
}

TEST(BayesHilbert, FisherRaoLineIsGeometricMixture) {
  const Grid g = Grid::rectangle({0, 1}, {0, 1}, 16, 12);
  std::mt19937_64 rng(6);
  const ScalarField h0 = random_smooth(g, rng, 1.0), h1 = random_smooth(g, rng, 1.0);
  const ScalarField w0 = exp_normalize(g, h0).w, w1 = exp_normalize(g, h1).w;
  for (double t : {0.0, 0.2, 0.5, 0.9, 1.0}) {
    const ScalarField w = exp_normalize(g, (1 - t) * h0 + t * h1).w;
    ScalarField mix = (w0.array().pow(1 - t) * w1.array().pow(t)).matrix();
    mix /= integrate(g, mix);
    EXPECT_LT((w - mix).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(BayesHilbert, ScoreEqualsCoordinateGradient) {
  const Grid g = Grid::line({0, 1}, 64);
  std::mt19937_64 rng(8);
  const CoordState s = exp_normalize(g, random_smooth(g, rng, 2.0));
  const FaceField a = gradient(g, s.w.array().log().matrix());
  const FaceField b = gradient(g, s.h);
  EXPECT_LT((a - b).max_abs(), 1e-12);
}

TEST(Admissibility, BoundsReport) {
  const Grid g = Grid::line({0, 1}, 32);
  const CoordState s = exp_normalize(g, g.sample([](double x) { return 10.0 * x; }));
  const AdmissibleBounds tight(0.5, 2.0);
  EXPECT_FALSE(tight.admits(s));
  EXPECT_TRUE(AdmissibleBounds(1e-6, 1e6).admits(s));
  EXPECT_THROW(AdmissibleBounds(2.0, 1.0), InputError);
}
