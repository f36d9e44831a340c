#include "primseg/errors.hpp"
#include "primseg/ingest.hpp"
#include "primseg/testkit.hpp"
#include "temp_dir.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

namespace primseg::testkit {
namespace {

double normal_pdf(double x, double mu, double var) {
  return std::exp(-(x - mu) * (x - mu) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

GaussianEmission scalar(double mean, double var) {
  return {Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var)};
}

TimeSeriesBag scalar_bag(const std::vector<double>& values) {
  TimeSeriesBag bag;
  bag.bag_id = "b";
  bag.channels = {"t.x"};
  bag.data = Eigen::Map<const Eigen::RowVectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return bag;
}

TEST(EnumerateMarginals, SingleFrame) {
  const TimeSeriesBag bag = scalar_bag({0.7});
  const Eigen::Vector2d initial(0.4, 0.6);
  const Eigen::MatrixXd m =
      enumerate_marginals(bag, Eigen::Matrix2d::Constant(0.5), {scalar(0.0, 1.0), scalar(2.0, 0.5)}, initial);
  const double a = 0.4 * normal_pdf(0.7, 0.0, 1.0);
  const double b = 0.6 * normal_pdf(0.7, 2.0, 0.5);
  EXPECT_NEAR(m(0, 0), a / (a + b), 1e-12);
  EXPECT_NEAR(m(0, 1), b / (a + b), 1e-12);
}

TEST(EnumerateMarginals, SingleStateIsCertain) {
  const Eigen::MatrixXd m = enumerate_marginals(scalar_bag({1.0, -3.0, 8.0}), Eigen::MatrixXd::Ones(1, 1),
                                                {scalar(0.0, 1.0)}, Eigen::VectorXd::Ones(1));
  EXPECT_EQ(m, Eigen::MatrixXd::Ones(3, 1));
}

TEST(EnumerateMarginals, EightSequenceHandSum) {
  const std::vector<double> x = {-0.3, 1.1, 2.0};
  Eigen::Matrix2d pi;
  pi << 0.7, 0.3, 0.4, 0.6;
  const Eigen::Vector2d initial(0.55, 0.45);
  const double mu[2] = {0.0, 1.5};
  const double var[2] = {0.8, 1.2};

  double p[3][2] = {};
  double total = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 2; ++c) {
        const double w = initial[a] * normal_pdf(x[0], mu[a], var[a]) * pi(a, b) * normal_pdf(x[1], mu[b], var[b]) *
                         pi(b, c) * normal_pdf(x[2], mu[c], var[c]);
        p[0][a] += w;
        p[1][b] += w;
        p[2][c] += w;
        total += w;
      }
    }
  }
  const Eigen::MatrixXd m =
      enumerate_marginals(scalar_bag(x), pi, {scalar(mu[0], var[0]), scalar(mu[1], var[1])}, initial);
  for (int t = 0; t < 3; ++t) {
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(m(t, k), p[t][k] / total, 1e-12);
  }
}

TEST(EnumerateMarginals, RowsSumToOne) {
  const auto trace = make_synthetic_trace(3, 2, 7, 0.6, 1.0, 4);
  const Eigen::MatrixXd m = enumerate_marginals(trace.bag, trace.pi, trace.emissions, trace.initial);
  for (Eigen::Index t = 0; t < m.rows(); ++t) EXPECT_NEAR(m.row(t).sum(), 1.0, 1e-9);
}

TEST(EnumerateMarginals, GuardsLargeInstances) {
  const auto trace = make_synthetic_trace(3, 1, 15, 0.6, 1.0, 4);
  EXPECT_THROW(enumerate_marginals(trace.bag, trace.pi, trace.emissions, trace.initial), ParameterError);
}

TEST(MaxWeightAssignment, FindsOptimum) {
  Eigen::Matrix3d w;
  // Greedy takes the 10 and ends at 11; the optimum is 9 + 9 + 1.
  w << 10, 9, 0, 9, 0, 0, 0, 0, 1;
  const auto a = max_weight_assignment(w);
  EXPECT_EQ(a, (std::vector<int>{1, 0, 2}));
}

TEST(MaxWeightAssignment, RectangularShapes) {
  Eigen::MatrixXd wide(2, 3);
  wide << 1, 5, 2, 4, 6, 0;
  EXPECT_EQ(max_weight_assignment(wide), (std::vector<int>{1, 0}));
  Eigen::MatrixXd tall(3, 2);
  tall << 1, 5, 4, 6, 7, 0;
  const auto a = max_weight_assignment(tall);
  EXPECT_EQ(a, (std::vector<int>{-1, 1, 0}));
}

TEST(MatchAccuracy, Examples) {
  const Labels truth{1, 1, 2, 2, 3, 3};
  EXPECT_EQ(match_accuracy(truth, truth), 1.0);
  EXPECT_EQ(match_accuracy(Labels{2, 2, 1, 1, 3, 3}, truth), 1.0);
  EXPECT_EQ(match_accuracy(Labels{1, 1, 1, 1}, Labels{1, 1, 2, 2}), 0.5);
  EXPECT_THROW(match_accuracy(Labels{1, 2}, Labels{1}), ParameterError);
  EXPECT_NEAR(match_accuracy(std::vector<long long>{40, 40, 7, 7, 7, 9}, truth), 5.0 / 6.0, 1e-15);
}

TEST(MatchAccuracy, InvariantUnderRelabeling) {
  const auto trace = make_synthetic_trace(4, 1, 300, 0.9, 1.0, 2);
  Labels noisy = trace.true_labels;
  for (std::size_t t = 0; t < noisy.size(); t += 7) noisy[t] = 1 + static_cast<int>(t % 5);
  const double base = match_accuracy(noisy, trace.true_labels);
  const int perm[6] = {0, 4, 1, 5, 3, 2};
  Labels renamed = noisy, truth_renamed = trace.true_labels;
  for (int& l : renamed) l = perm[l];
  for (int& l : truth_renamed) l = 10 + perm[l];
  EXPECT_EQ(match_accuracy(renamed, trace.true_labels), base);
  EXPECT_EQ(match_accuracy(noisy, truth_renamed), base);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
}

TEST(SyntheticTrace, ShapeAndSeparation) {
  const auto trace = make_synthetic_trace(4, 3, 500, 0.98, 4.0, 11);
  EXPECT_EQ(trace.bag.dims(), 3);
  EXPECT_EQ(trace.bag.frames(), 500);
  EXPECT_EQ(trace.true_labels.size(), 500U);
  EXPECT_EQ(trace.emissions.size(), 4U);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      EXPECT_GE((trace.emissions[i].mean - trace.emissions[j].mean).norm(), 4.0);
    }
  }
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(trace.pi(i, i), 0.98);
    EXPECT_NEAR(trace.pi.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_EQ(trace.bag.channels, (std::vector<std::string>{"synth.x1", "synth.x2", "synth.x3"}));
}

TEST(ManeuverTrace, TripShape) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto trace = make_maneuver_trace(seed);
    EXPECT_GE(trace.bag.frames(), 1100);
    EXPECT_LE(trace.bag.frames(), 1250);
    EXPECT_EQ(trace.bag.dims(), 4);
    EXPECT_NEAR(trace.bag.rate_hz, 34.3, 0.05);
    EXPECT_EQ(trace.true_labels.size(), static_cast<std::size_t>(trace.bag.frames()));
    const std::set<int> regimes(trace.true_labels.begin(), trace.true_labels.end());
    EXPECT_EQ(regimes.size(), 5U);
    EXPECT_EQ(trace.behavior.name, kManeuverBehavior);
  }
}

TEST(ManeuverTrace, Deterministic) {
  const auto a = make_maneuver_trace(3);
  const auto b = make_maneuver_trace(3);
  EXPECT_EQ(a.bag.data, b.bag.data);
  EXPECT_EQ(a.true_labels, b.true_labels);
  EXPECT_EQ(a.raw_topics, b.raw_topics);
  EXPECT_NE(make_maneuver_trace(4).bag.data, a.bag.data);
}

TEST(TraceBag, ResamplesBackToBag) {
  TempDir dir;
  for (const auto& trace : {make_maneuver_trace(1), make_synthetic_trace(2, 2, 80, 0.9, 3.0, 1)}) {
    write_trace_bag(trace, dir.path());
    const BagManifest m = read_bag_manifest(dir / "manifest.json");
    ASSERT_EQ(m.behaviors.size(), 1U);
    const TimeSeriesBag bag = resample_uniform(load_manifest_topics(m, dir.path()), m.behaviors[0], m.bag_id);
    EXPECT_EQ(bag.frames(), trace.bag.frames());
    EXPECT_EQ(bag.start_time, trace.bag.start_time);
    EXPECT_EQ(bag.channels, trace.bag.channels);
    EXPECT_LT((bag.data - trace.bag.data).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(read_label_csv(dir / "truth.csv"), trace.true_labels);
  }
}

}  // namespace
}  // namespace primseg::testkit
