#include "primseg/errors.hpp"
#include "primseg/model.hpp"
#include "primseg/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace primseg {
namespace {

double univariate_logpdf(double x, double mu, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mu) * (x - mu) / (2.0 * var);
}

GaussianEmission scalar(double mean, double var) {
  return {Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var)};
}

TEST(StickBreaking, SingleStickPlusRemainder) {
  Rng rng(1);
  const Eigen::VectorXd beta = stick_breaking(1.0, 1, rng);
  ASSERT_EQ(beta.size(), 2);
  EXPECT_GT(beta[0], 0.0);
  EXPECT_NEAR(beta.sum(), 1.0, 1e-12);
}

TEST(StickBreaking, FirstWeightMeanMatchesBetaMean) {
  Rng rng(7);
  double total = 0.0;
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) total += stick_breaking(1.0, 3, rng)[0];
  EXPECT_NEAR(total / reps, 1.0 / (1.0 + 1.0), 0.01);
}

TEST(StickBreaking, LargerGammaSpreadsMass) {
  Rng rng(11);
  double big = 0.0, small = 0.0;
  for (int r = 0; r < 20000; ++r) {
    big += stick_breaking(10.0, 10, rng)[0];
    small += stick_breaking(0.1, 10, rng)[0];
  }
  EXPECT_LT(big, small);
  EXPECT_NEAR(big / 20000, 1.0 / 11.0, 0.01);
  EXPECT_NEAR(small / 20000, 1.0 / 1.1, 0.01);
}

TEST(StickBreaking, AlwaysNormalizedAndNonnegative) {
  for (double gamma : {0.1, 1.0, 10.0}) {
    for (int n = 1; n <= 50; ++n) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed * 1000 + static_cast<std::uint64_t>(n));
        const Eigen::VectorXd beta = stick_breaking(gamma, n, rng);
        ASSERT_EQ(beta.size(), n + 1);
        EXPECT_GE(beta.minCoeff(), 0.0);
        EXPECT_NEAR(beta.sum(), 1.0, 1e-12) << "gamma " << gamma << " L " << n;
      }
    }
  }
}

TEST(StickBreaking, RejectsBadParameters) {
  Rng rng(1);
  EXPECT_THROW(stick_breaking(0.0, 3, rng), ParameterError);
  EXPECT_THROW(stick_breaking(-1.0, 3, rng), ParameterError);
  EXPECT_THROW(stick_breaking(1.0, 0, rng), ParameterError);
}

TEST(StickyRowConcentration, DirectSubstitution) {
  const Eigen::Vector2d beta(0.5, 0.5);
  const Eigen::VectorXd c = sticky_row_concentration(1.0, beta, 1.0, 1);
  EXPECT_DOUBLE_EQ(c[0], 1.5);
  EXPECT_DOUBLE_EQ(c[1], 0.5);

  const Eigen::Vector3d beta3(0.2, 0.3, 0.5);
  const Eigen::VectorXd c3 = sticky_row_concentration(2.0, beta3, 4.0, 3);
  EXPECT_NEAR(c3[0], 0.4, 1e-15);
  EXPECT_NEAR(c3[1], 0.6, 1e-15);
  EXPECT_NEAR(c3[2], 5.0, 1e-15);
}

TEST(StickyRowConcentration, KappaOnlyTouchesOwnCoordinate) {
  const Eigen::Vector4d beta(0.1, 0.2, 0.3, 0.4);
  const double alpha = 2.5;
  const Eigen::VectorXd plain = sticky_row_concentration(alpha, beta, 0.0, 2);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(plain[j], alpha * beta[j]);
  const Eigen::VectorXd sticky = sticky_row_concentration(alpha, beta, 7.0, 2);
  for (int j = 0; j < 4; ++j) {
    if (j == 1) {
      EXPECT_DOUBLE_EQ(sticky[j] - plain[j], 7.0);
    } else {
      EXPECT_EQ(sticky[j], plain[j]);
    }
  }
  EXPECT_NEAR(sticky.sum(), alpha * beta.sum() + 7.0, 1e-12);
}

TEST(StickyRowConcentration, RejectsOutOfRangeState) {
  const Eigen::Vector2d beta(0.5, 0.5);
  EXPECT_THROW(sticky_row_concentration(1.0, beta, 1.0, 0), ParameterError);
  EXPECT_THROW(sticky_row_concentration(1.0, beta, 1.0, 3), ParameterError);
}

TEST(StickyRowConcentration, PriorSelfTransitionMean) {
  Rng rng(5);
  const Eigen::Vector3d beta(0.5, 0.3, 0.2);
  const double alpha = 1.0, kappa = 9.0;
  const int i = 2;
  const Eigen::VectorXd c = sticky_row_concentration(alpha, beta, kappa, i);
  double sum = 0.0;
  const int draws = 100000;
  for (int r = 0; r < draws; ++r) sum += dirichlet(c, rng)[i - 1];
  const double expected = (alpha * beta[i - 1] + kappa) / (alpha * beta.sum() + kappa);
  EXPECT_NEAR(sum / draws, expected, 1e-2);
}

TEST(GaussianLogPdf, StandardNormalAtZero) {
  EXPECT_NEAR(gaussian_logpdf(Eigen::VectorXd::Zero(1), scalar(0.0, 1.0)), -0.9189385332046727, 1e-12);
}

TEST(GaussianLogPdf, BivariateAtMean) {
  const GaussianEmission e{Eigen::Vector2d(3.0, -1.0), Eigen::Matrix2d::Identity()};
  EXPECT_NEAR(gaussian_logpdf(e.mean, e), -std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(GaussianLogPdf, DiagonalMatchesProductOfUnivariates) {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  cov(0, 0) = 2.0;
  cov(1, 1) = 0.5;
  const GaussianEmission e{Eigen::Vector2d::Zero(), cov};
  const double expected = univariate_logpdf(1.0, 0.0, 2.0) + univariate_logpdf(0.0, 0.0, 0.5);
  EXPECT_NEAR(gaussian_logpdf(Eigen::Vector2d(1.0, 0.0), e), expected, 1e-12);
}

TEST(GaussianLogPdf, InvariantUnderCoordinatePermutation) {
  Eigen::Matrix3d cov;
  cov << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.7;
  const GaussianEmission e{Eigen::Vector3d(0.5, -1.0, 2.0), cov};
  const Eigen::Vector3d x(1.0, 0.2, 1.5);
  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 2, 0, 1;
  const GaussianEmission permuted{perm * e.mean, perm * e.cov * perm.transpose()};
  EXPECT_NEAR(gaussian_logpdf(perm * x, permuted), gaussian_logpdf(x, e), 1e-12);
}

TEST(GaussianLogPdf, NonPositiveDefiniteReportsEigenvalue) {
  Eigen::Matrix2d cov;
  cov << 1.0, 2.0, 2.0, 1.0;
  const GaussianEmission e{Eigen::Vector2d::Zero(), cov};
  try {
    gaussian_logpdf(Eigen::Vector2d::Zero(), e);
    FAIL() << "expected NumericError";
  } catch (const NumericError& err) {
    EXPECT_NE(std::string(err.what()).find("eigenvalue"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("-1"), std::string::npos);
  }
}

TEST(GaussianLogPdf, DimensionMismatch) {
  EXPECT_THROW(gaussian_logpdf(Eigen::Vector2d::Zero(), scalar(0.0, 1.0)), ParameterError);
}

ModelState two_state_model(const Labels& labels) {
  ModelState s;
  s.beta = Eigen::Vector3d(0.6, 0.4, 0.0);
  s.pi.resize(2, 2);
  s.pi << 0.9, 0.1, 0.25, 0.75;
  s.emissions = {scalar(-1.0, 0.5), scalar(2.0, 1.5)};
  s.labels = labels;
  return s;
}

TimeSeriesBag scalar_bag(const std::vector<double>& values) {
  TimeSeriesBag bag;
  bag.bag_id = "b";
  bag.channels = {"t.x"};
  bag.data = Eigen::Map<const Eigen::RowVectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return bag;
}

TEST(JointLogLikelihood, SingleFrame) {
  const TimeSeriesBag bag = scalar_bag({0.3});
  const ModelState s = two_state_model({2});
  const Eigen::Vector2d initial(0.3, 0.7);
  EXPECT_NEAR(joint_log_likelihood(bag, s, initial), std::log(0.7) + univariate_logpdf(0.3, 2.0, 1.5), 1e-12);
}

TEST(JointLogLikelihood, TermwiseSum) {
  const TimeSeriesBag bag = scalar_bag({-0.8, 1.9, 2.4});
  const ModelState s = two_state_model({1, 2, 2});
  const Eigen::Vector2d initial(0.3, 0.7);
  const double expected = std::log(0.3) + univariate_logpdf(-0.8, -1.0, 0.5) + std::log(0.1) +
                          univariate_logpdf(1.9, 2.0, 1.5) + std::log(0.75) + univariate_logpdf(2.4, 2.0, 1.5);
  EXPECT_NEAR(joint_log_likelihood(bag, s, initial), expected, 1e-12);
}

TEST(JointLogLikelihood, ZeroProbabilityTransitionIsMinusInfinity) {
  const TimeSeriesBag bag = scalar_bag({0.0, 0.0});
  ModelState s = two_state_model({1, 2});
  s.pi << 1.0, 0.0, 0.5, 0.5;
  const Eigen::Vector2d initial(0.5, 0.5);
  const double v = joint_log_likelihood(bag, s, initial);
  EXPECT_TRUE(std::isinf(v) && v < 0.0);
}

TEST(JointLogLikelihood, FiniteOnSimulatedSequence) {
  Rng rng(3);
  Eigen::Matrix2d pi;
  pi << 0.95, 0.05, 0.1, 0.9;
  const std::vector<GaussianEmission> emissions = {scalar(0.0, 1.0), scalar(5.0, 2.0)};
  const Eigen::Vector2d initial(0.5, 0.5);
  const SimulatedSequence sim = simulate(pi, emissions, initial, 200, rng);
  TimeSeriesBag bag;
  bag.bag_id = "sim";
  bag.channels = {"t.x"};
  bag.data = sim.data;
  ModelState s;
  s.beta = Eigen::Vector3d(0.5, 0.5, 0.0);
  s.pi = pi;
  s.emissions = emissions;
  s.labels = sim.labels;
  EXPECT_TRUE(std::isfinite(joint_log_likelihood(bag, s, initial)));
}

TEST(Simulate, SingleState) {
  Rng rng(1);
  const SimulatedSequence sim =
      simulate(Eigen::MatrixXd::Ones(1, 1), {scalar(0.0, 1.0)}, Eigen::VectorXd::Ones(1), 50, rng);
  ASSERT_EQ(sim.labels.size(), 50U);
  for (int l : sim.labels) EXPECT_EQ(l, 1);
  EXPECT_EQ(sim.data.rows(), 1);
  EXPECT_EQ(sim.data.cols(), 50);
}

TEST(Simulate, IdentityTransitionsAbsorb) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const SimulatedSequence sim = simulate(Eigen::MatrixXd::Identity(3, 3),
                                           {scalar(0.0, 1.0), scalar(1.0, 1.0), scalar(2.0, 1.0)},
                                           Eigen::Vector3d::Constant(1.0 / 3.0), 40, rng);
    for (int l : sim.labels) EXPECT_EQ(l, sim.labels.front());
  }
}

TEST(Simulate, SelfTransitionFrequency) {
  Rng rng(21);
  Eigen::Matrix2d pi;
  pi << 0.98, 0.02, 0.02, 0.98;
  const SimulatedSequence sim =
      simulate(pi, {scalar(0.0, 1.0), scalar(3.0, 1.0)}, Eigen::Vector2d(0.5, 0.5), 2000, rng);
  int stays = 0;
  for (std::size_t t = 1; t < sim.labels.size(); ++t) stays += sim.labels[t] == sim.labels[t - 1];
  EXPECT_NEAR(static_cast<double>(stays) / 1999.0, 0.98, 0.02);
}

TEST(Simulate, ReproducibleGivenSeed) {
  Eigen::Matrix2d pi;
  pi << 0.9, 0.1, 0.2, 0.8;
  Rng a(99), b(99);
  const auto s1 = simulate(pi, {scalar(0.0, 1.0), scalar(3.0, 1.0)}, Eigen::Vector2d(0.5, 0.5), 100, a);
  const auto s2 = simulate(pi, {scalar(0.0, 1.0), scalar(3.0, 1.0)}, Eigen::Vector2d(0.5, 0.5), 100, b);
  EXPECT_EQ(s1.labels, s2.labels);
  EXPECT_EQ(s1.data, s2.data);
}

}  // namespace
}  // namespace primseg
