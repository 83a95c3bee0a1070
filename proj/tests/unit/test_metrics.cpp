#include <gtest/gtest.h>

#include <cmath>

#include "icldyn/errors.hpp"
#include "icldyn/metrics.hpp"
#include "icldyn/random.hpp"

using namespace icldyn;

TEST(Score, UniformBinaryTieGoesToClassZero) {
  const std::vector<double> p{0.5, 0.5};
  const auto s = score_prediction(p, 0);
  EXPECT_TRUE(s.correct);
  EXPECT_TRUE(s.tie);
  EXPECT_NEAR(s.log_likelihood, -0.6931, 1e-4);
  EXPECT_NEAR(s.entropy, 0.6931, 1e-4);
  EXPECT_FALSE(score_prediction(p, 1).correct);
}

TEST(Score, DeltaAndUniformFour) {
  const std::vector<double> delta{1, 0, 0, 0};
  const auto s = score_prediction(delta, 0);
  EXPECT_TRUE(s.correct);
  EXPECT_EQ(s.log_likelihood, 0.0);
  EXPECT_EQ(s.entropy, 0.0);
  const std::vector<double> u(4, 0.25);
  EXPECT_NEAR(score_prediction(u, 2).entropy, std::log(4.0), 1e-12);
}

TEST(Score, BoundsHoldOnRandomSimplexPoints) {
  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const std::size_t C = 2 + rng.uniform_index(4);
    std::vector<double> p(C);
    double total = 0;
    for (double& v : p) total += (v = rng.uniform01() + 1e-9);
    for (double& v : p) v /= total;
    const auto s = score_prediction(p, rng.uniform_index(C));
    EXPECT_LE(s.log_likelihood, 0.0);
    EXPECT_GE(s.entropy, 0.0);
    EXPECT_LE(s.entropy, std::log(static_cast<double>(C)) + 1e-12);
  }
}

TEST(Guessing, ClosedForms) {
  const auto a = guessing_baseline(std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(a.accuracy, 0.5, 1e-12);
  EXPECT_NEAR(a.log_likelihood, -0.6931, 1e-4);
  EXPECT_NEAR(a.entropy, 0.6931, 1e-4);
  const auto b = guessing_baseline(std::vector<double>{0.9, 0.1});
  EXPECT_NEAR(b.accuracy, 0.9, 1e-12);
  EXPECT_NEAR(b.log_likelihood, -0.3251, 1e-4);
  EXPECT_NEAR(b.entropy, 0.3251, 1e-4);
  const auto c = guessing_baseline(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(c.accuracy, 1.0);
  EXPECT_EQ(c.log_likelihood, 0.0);
  EXPECT_EQ(c.entropy, 0.0);
}

TEST(Calibrate, HandComputedCases) {
  const auto a = calibrate(std::vector<double>{0.8, 0.2}, std::vector<double>{0.8, 0.2});
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  const auto b = calibrate(std::vector<double>{0.6, 0.4}, std::vector<double>{0.3, 0.7});
  EXPECT_NEAR(b[0], 0.7778, 1e-4);
  EXPECT_NEAR(b[1], 0.2222, 1e-4);
  EXPECT_THROW(calibrate(std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, 0.0}),
               CalibrationError);
}

TEST(Calibrate, UniformPriorIsIdentity) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(3);
    double total = 0;
    for (double& v : p) total += (v = rng.uniform01() + 1e-6);
    for (double& v : p) v /= total;
    const auto q = calibrate(p, std::vector<double>(3, 1.0 / 3.0));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(q[c], p[c], 1e-12);
  }
}

TEST(MovingAverage, EdgesShrink) {
  const auto m = moving_average(std::vector<double>{0, 3, 0}, 3);
  EXPECT_EQ(m, (std::vector<double>{1.5, 1.0, 1.5}));
  const std::vector<double> s{1, 5, 2, 8};
  EXPECT_EQ(moving_average(s, 1), s);
  const auto c = moving_average(std::vector<double>(7, 2.5), 5);
  for (double v : c) EXPECT_DOUBLE_EQ(v, 2.5);
  const auto t = moving_average(std::vector<double>{0, 3, 0}, 2, Smoothing::trailing);
  EXPECT_EQ(t, (std::vector<double>{0.0, 1.5, 1.5}));
}

TEST(MovingAverage, IsLinear) {
  Rng rng(8);
  std::vector<double> a(20), b(20), sum(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    sum[i] = 2.0 * a[i] - 3.0 * b[i];
  }
  const auto ma = moving_average(a, 5), mb = moving_average(b, 5), ms = moving_average(sum, 5);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(ms[i], 2.0 * ma[i] - 3.0 * mb[i], 1e-12);
}

TEST(Sample, MeanAndStandardError) {
  const auto s = summarize_sample(std::vector<double>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.standard_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  const auto c = summarize_sample(std::vector<double>(500, 0.1));
  EXPECT_EQ(c.mean, 0.1);
  EXPECT_EQ(c.standard_error, 0.0);
}

TEST(Bootstrap, ConstantSampleGivesPointInterval) {
  const auto ci = bootstrap_ci(std::vector<double>(50, -0.3));
  EXPECT_EQ(ci.low, -0.3);
  EXPECT_EQ(ci.high, -0.3);
  EXPECT_THROW(bootstrap_ci(std::vector<double>{1.0}), InsufficientDataError);
}

TEST(Bootstrap, TwoPointSampleStaysInSupportAndIsSeeded) {
  std::vector<double> v;
  for (int i = 0; i < 40; ++i) v.push_back(i % 2);
  BootstrapOptions o;
  const auto a = bootstrap_ci(v, o), b = bootstrap_ci(v, o);
  EXPECT_GE(a.low, 0.0);
  EXPECT_LE(a.high, 1.0);
  EXPECT_LT(a.low, 0.5);
  EXPECT_GT(a.high, 0.5);
  EXPECT_EQ(a.low, b.low);
  EXPECT_EQ(a.high, b.high);
}

TEST(Bootstrap, NinetyNinePercentCoverage) {
  Rng rng(derive_seed(0, {1234}));
  const int trials = 1000;
  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> v(500);
    for (double& x : v) x = rng.normal();
    BootstrapOptions o;
    o.resamples = 1000;
    o.seed = static_cast<std::uint64_t>(t);
    const auto ci = bootstrap_ci(v, o);
    covered += ci.low <= 0.0 && 0.0 <= ci.high;
  }
  EXPECT_GE(covered, 950);
}

TEST(Significance, PublishedExamples) {
  EXPECT_TRUE(significance(SampleStats{0.42, 0.02, 500}, true).bold);
  EXPECT_FALSE(significance(SampleStats{0.02, 0.02, 500}, true).bold);
  EXPECT_FALSE(significance(SampleStats{0.0, 0.01, 500}, true).bold);
  EXPECT_TRUE(significance(SampleStats{-0.05, 0.01, 500}, true).bold);
  EXPECT_TRUE(significance(SampleStats{0.3, 0.01, 500}, false).gray);
  EXPECT_FALSE(significance(SampleStats{0.3, 0.01, 500}, true).gray);
}

TEST(Significance, GrayingFollowsTheLenientRule) {
  const MetricTriple base{0.5, -0.6931, 0.6931};
  // Mean below the baseline but within 1.645 SE still beats it.
  EXPECT_TRUE(beats_baseline({0.49, 0.01, 100}, {-0.70, 0.01, 100}, base));
  EXPECT_FALSE(beats_baseline({0.40, 0.01, 100}, {-0.60, 0.01, 100}, base));
  EXPECT_FALSE(beats_baseline({0.60, 0.01, 100}, {-0.80, 0.01, 100}, base));
}

TEST(Significance, SignConventionAndPairing) {
  const std::vector<double> def{-0.1, -0.2, -0.15, -0.12};
  const std::vector<double> var{-0.6, -0.7, -0.65, -0.5};
  const auto paired = difference_stats(def, var, Pairing::paired);
  EXPECT_GT(paired.mean, 0.0);
  EXPECT_NEAR(paired.mean, summarize_sample(def).mean - summarize_sample(var).mean, 1e-12);
  const auto indep = difference_stats(def, var, Pairing::independent);
  const double se1 = summarize_sample(def).standard_error, se2 = summarize_sample(var).standard_error;
  EXPECT_NEAR(indep.standard_error, std::sqrt(se1 * se1 + se2 * se2), 1e-15);
  EXPECT_THROW(difference_stats(def, std::vector<double>{1.0}, Pairing::paired), PairingError);
  const auto same = difference_stats(def, def, Pairing::paired);
  EXPECT_EQ(same.mean, 0.0);
  EXPECT_EQ(same.standard_error, 0.0);
  EXPECT_FALSE(significance(same, true).bold);
}

TEST(Aggregate, PerSizeMeansAndRaggedRuns) {
  std::vector<std::vector<PointScore>> scored{
      {score_prediction(std::vector<double>{0.8, 0.2}, 0), score_prediction(std::vector<double>{0.4, 0.6}, 0)},
      {score_prediction(std::vector<double>{0.2, 0.8}, 0)}};
  const auto c = aggregate(scored);
  EXPECT_EQ(c.runs, 2u);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c.accuracy[0], 0.5);
  EXPECT_DOUBLE_EQ(c.accuracy[1], 0.0);
  EXPECT_NEAR(c.log_likelihood[0], 0.5 * (std::log(0.8) + std::log(0.2)), 1e-15);
  const auto v = per_size_values(scored, Metric::log_likelihood);
  EXPECT_EQ(v[0].size(), 2u);
  EXPECT_EQ(v[1].size(), 1u);
  EXPECT_EQ(metric_from_name("loglik"), Metric::log_likelihood);
  EXPECT_EQ(metric_name(Metric::entropy), "entropy");
}
