#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "icldyn/extract.hpp"

namespace icldyn {

inline constexpr double kBoldZ = 1.96;
inline constexpr double kGrayZ = 1.645;

enum class Metric { accuracy, log_likelihood, entropy };

std::string_view metric_name(Metric m);
/// Accepts "accuracy", "loglik"/"log_likelihood", "entropy".
Metric metric_from_name(std::string_view name);

struct PointScore {
  bool correct = false;
  /// The argmax was shared by several classes (lowest index wins).
  bool tie = false;
  double log_likelihood = 0.0;
  double entropy = 0.0;

  double value(Metric m) const;
};

PointScore score_prediction(std::span<const double> probs, std::size_t true_class);
std::vector<PointScore> score_curve(const DynamicsCurve& curve);

struct MetricTriple {
  double accuracy = 0.0;
  double log_likelihood = 0.0;
  double entropy = 0.0;

  double value(Metric m) const;
};

/// Scores of the predictor that always emits the class frequencies.
MetricTriple guessing_baseline(std::span<const double> frequencies);

/// q_c proportional to p_c / prior_c. Throws CalibrationError on a
/// non-positive prior entry.
std::vector<double> calibrate(std::span<const double> probs,
                              std::span<const double> prior);

enum class Smoothing { centered, trailing };

/// Moving average with windows shrunk at the edges; output length equals
/// input length.
std::vector<double> moving_average(std::span<const double> series,
                                   std::size_t window,
                                   Smoothing kind = Smoothing::centered);

struct SampleStats {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
SampleStats summarize_sample(std::span<const double> values);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct BootstrapOptions {
  double level = 0.99;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

/// Percentile bootstrap interval for the mean.
Interval bootstrap_ci(std::span<const double> values,
                      const BootstrapOptions& options = {});

enum class Pairing { paired, independent };

/// Mean and standard error of default - variant.
SampleStats difference_stats(std::span<const double> default_values,
                             std::span<const double> variant_values,
                             Pairing pairing);

/// Default performance is significantly better than guessing when
/// mean + 1.645 SE exceeds the baseline for both accuracy and
/// log-likelihood.
bool beats_baseline(const SampleStats& default_accuracy,
                    const SampleStats& default_log_likelihood,
                    const MetricTriple& baseline);

struct SignificanceCell {
  double mean_difference = 0.0;
  double standard_error = 0.0;
  bool bold = false;
  bool gray = false;
};

SignificanceCell significance(const SampleStats& difference,
                              bool default_beats_baseline);

/// Full form: per-run values at the maximum context size.
SignificanceCell significance(std::span<const double> default_values,
                              std::span<const double> variant_values,
                              Pairing pairing,
                              const SampleStats& default_accuracy,
                              const SampleStats& default_log_likelihood,
                              const MetricTriple& baseline);

/// Per-context-size means and standard errors across runs.
struct MetricCurves {
  std::size_t runs = 0;
  std::vector<double> accuracy;
  std::vector<double> log_likelihood;
  std::vector<double> entropy;
  std::vector<double> accuracy_se;
  std::vector<double> log_likelihood_se;
  std::vector<double> entropy_se;

  std::size_t size() const noexcept { return accuracy.size(); }
  const std::vector<double>& mean(Metric m) const;
  const std::vector<double>& se(Metric m) const;
};

/// values[size][run] for one metric. Runs shorter than the longest curve
/// simply do not contribute at the missing sizes.
std::vector<std::vector<double>> per_size_values(
    std::span<const std::vector<PointScore>> scored, Metric metric);

MetricCurves aggregate(std::span<const std::vector<PointScore>> scored);

}  // namespace icldyn
