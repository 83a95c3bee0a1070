#include "icldyn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "icldyn/errors.hpp"
#include "icldyn/random.hpp"

namespace icldyn {

namespace {

double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

/// Mean accumulated relative to the first element, so a constant sample
/// yields exactly that constant.
double stable_mean(std::span<const double> values) {
  const double ref = values.front();
  double acc = 0.0;
  for (double v : values) acc += v - ref;
  return ref + acc / static_cast<double>(values.size());
}

/// Linear-interpolation quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  if (sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy:
      return "accuracy";
    case Metric::log_likelihood:
      return "loglik";
    case Metric::entropy:
      return "entropy";
  }
  return "";
}

Metric metric_from_name(std::string_view name) {
  if (name == "accuracy" || name == "acc") return Metric::accuracy;
  if (name == "loglik" || name == "log_likelihood") return Metric::log_likelihood;
  if (name == "entropy") return Metric::entropy;
  throw Error("unknown metric '" + std::string(name) + "'");
}

double PointScore::value(Metric m) const {
  switch (m) {
    case Metric::accuracy:
      return correct ? 1.0 : 0.0;
    case Metric::log_likelihood:
      return log_likelihood;
    case Metric::entropy:
      return entropy;
  }
  return 0.0;
}

double MetricTriple::value(Metric m) const {
  switch (m) {
    case Metric::accuracy:
      return accuracy;
    case Metric::log_likelihood:
      return log_likelihood;
    case Metric::entropy:
      return entropy;
  }
  return 0.0;
}

PointScore score_prediction(std::span<const double> probs, std::size_t true_class) {
  if (true_class >= probs.size()) throw Error("true class out of range");
  PointScore s;
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (c != best && probs[c] == probs[best]) s.tie = true;
  }
  s.correct = best == true_class;
  s.log_likelihood = std::log(probs[true_class]);
  s.entropy = entropy_of(probs);
  return s;
}

std::vector<PointScore> score_curve(const DynamicsCurve& curve) {
  std::vector<PointScore> out;
  out.reserve(curve.size());
  for (const auto& pt : curve.points) {
    out.push_back(score_prediction(pt.prediction.probs, pt.true_class));
  }
  return out;
}

MetricTriple guessing_baseline(std::span<const double> frequencies) {
  if (frequencies.empty()) throw Error("empty class frequencies");
  MetricTriple t;
  t.accuracy = *std::max_element(frequencies.begin(), frequencies.end());
  t.entropy = entropy_of(frequencies);
  t.log_likelihood = -t.entropy;
  return t;
}

std::vector<double> calibrate(std::span<const double> probs,
                              std::span<const double> prior) {
  if (probs.size() != prior.size()) {
    throw CalibrationError("prediction and prior differ in length");
  }
  std::vector<double> out(probs.size());
  double total = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (!(prior[c] > 0.0)) {
      throw CalibrationError("calibration prior must be strictly positive");
    }
    out[c] = probs[c] / prior[c];
    total += out[c];
  }
  if (!(total > 0.0)) throw CalibrationError("calibrated mass is zero");
  for (double& q : out) q /= total;
  return out;
}

std::vector<double> moving_average(std::span<const double> series,
                                   std::size_t window, Smoothing kind) {
  if (window < 1) throw Error("moving average window must be at least 1");
  const std::size_t n = series.size();
  std::vector<double> out(n);
  const std::size_t before = kind == Smoothing::centered ? (window - 1) / 2 : window - 1;
  const std::size_t after = kind == Smoothing::centered ? window / 2 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= before ? i - before : 0;
    const std::size_t hi = std::min(n - 1, i + after);
    out[i] = stable_mean(series.subspan(lo, hi - lo + 1));
  }
  return out;
}

SampleStats summarize_sample(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("no values to summarize");
  SampleStats s;
  s.n = values.size();
  s.mean = stable_mean(values);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double var = ss / static_cast<double>(s.n - 1);
    s.standard_error = std::sqrt(var / static_cast<double>(s.n));
  }
  return s;
}

Interval bootstrap_ci(std::span<const double> values,
                      const BootstrapOptions& options) {
  if (values.size() < 2) {
    throw InsufficientDataError("bootstrap needs at least two runs");
  }
  if (!(options.level > 0.0 && options.level < 1.0) || options.resamples < 1) {
    throw Error("invalid bootstrap options");
  }
  const std::size_t n = values.size();
  const double ref = values.front();
  Rng rng(options.seed);
  std::vector<double> means(options.resamples);
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[rng.uniform_index(n)] - ref;
    m = ref + acc / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - options.level;
  return Interval{quantile_sorted(means, alpha / 2.0),
                  quantile_sorted(means, 1.0 - alpha / 2.0)};
}

SampleStats difference_stats(std::span<const double> default_values,
                             std::span<const double> variant_values,
                             Pairing pairing) {
  if (pairing == Pairing::paired) {
    if (default_values.size() != variant_values.size()) {
      throw PairingError("paired comparison needs equal run counts");
    }
    std::vector<double> diffs(default_values.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
      diffs[i] = default_values[i] - variant_values[i];
    }
    return summarize_sample(diffs);
  }
  const SampleStats a = summarize_sample(default_values);
  const SampleStats b = summarize_sample(variant_values);
  SampleStats d;
  d.mean = a.mean - b.mean;
  d.standard_error = std::sqrt(a.standard_error * a.standard_error +
                               b.standard_error * b.standard_error);
  d.n = std::min(a.n, b.n);
  return d;
}

bool beats_baseline(const SampleStats& default_accuracy,
                    const SampleStats& default_log_likelihood,
                    const MetricTriple& baseline) {
  return default_accuracy.mean + kGrayZ * default_accuracy.standard_error >
             baseline.accuracy &&
         default_log_likelihood.mean +
                 kGrayZ * default_log_likelihood.standard_error >
             baseline.log_likelihood;
}

SignificanceCell significance(const SampleStats& difference,
                              bool default_beats_baseline) {
  SignificanceCell cell;
  cell.mean_difference = difference.mean;
  cell.standard_error = difference.standard_error;
  cell.bold = std::abs(difference.mean) > kBoldZ * difference.standard_error;
  cell.gray = !default_beats_baseline;
  return cell;
}

SignificanceCell significance(std::span<const double> default_values,
                              std::span<const double> variant_values,
                              Pairing pairing,
                              const SampleStats& default_accuracy,
                              const SampleStats& default_log_likelihood,
                              const MetricTriple& baseline) {
  return significance(
      difference_stats(default_values, variant_values, pairing),
      beats_baseline(default_accuracy, default_log_likelihood, baseline));
}

const std::vector<double>& MetricCurves::mean(Metric m) const {
  switch (m) {
    case Metric::accuracy:
      return accuracy;
    case Metric::log_likelihood:
      return log_likelihood;
    case Metric::entropy:
      return entropy;
  }
  return accuracy;
}

const std::vector<double>& MetricCurves::se(Metric m) const {
  switch (m) {
    case Metric::accuracy:
      return accuracy_se;
    case Metric::log_likelihood:
      return log_likelihood_se;
    case Metric::entropy:
      return entropy_se;
  }
  return accuracy_se;
}

std::vector<std::vector<double>> per_size_values(
    std::span<const std::vector<PointScore>> scored, Metric metric) {
  std::size_t longest = 0;
  for (const auto& run : scored) longest = std::max(longest, run.size());
  std::vector<std::vector<double>> out(longest);
  for (const auto& run : scored) {
    for (std::size_t i = 0; i < run.size(); ++i) out[i].push_back(run[i].value(metric));
  }
  return out;
}

MetricCurves aggregate(std::span<const std::vector<PointScore>> scored) {
  MetricCurves curves;
  curves.runs = scored.size();
  for (Metric m : {Metric::accuracy, Metric::log_likelihood, Metric::entropy}) {
    auto& means = const_cast<std::vector<double>&>(curves.mean(m));
    auto& ses = const_cast<std::vector<double>&>(curves.se(m));
    for (const auto& values : per_size_values(scored, m)) {
      const SampleStats s = summarize_sample(values);
      means.push_back(s.mean);
      ses.push_back(s.standard_error);
    }
  }
  return curves;
}

}  // namespace icldyn
