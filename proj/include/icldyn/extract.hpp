#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "icldyn/backend.hpp"
#include "icldyn/tokenalign.hpp"
#include "icldyn/verbalize.hpp"

namespace icldyn {

/// Label log-probs below this are raised to it before renormalizing.
inline constexpr double kLogProbFloor = -80.0;

/// A class-probability vector renormalized over the label tokens.
struct ClassPrediction {
  std::vector<double> probs;
  /// Label-token probabilities under the full-vocabulary softmax.
  std::vector<double> raw;
  /// True when at least one class hit the floor.
  bool floored = false;
};

/// Restricts a label log-prob row to a distribution over classes. Throws
/// DegenerateDistributionError when no class has representable mass.
ClassPrediction renormalize(std::span<const double> label_logprobs);

/// Point i: the prediction for example i+1 given examples 1..i, and the
/// label that was displayed for it.
struct CurvePoint {
  ClassPrediction prediction;
  std::size_t true_class = 0;
};

/// Label predictions at every context size from one forward pass.
struct DynamicsCurve {
  std::vector<CurvePoint> points;

  std::size_t size() const noexcept { return points.size(); }
  /// Log-probability of the displayed label sequence: the sum of
  /// log p(true) over the points.
  double joint_log_prob() const;
  /// Context sizes (0-based points) where flooring was applied.
  std::vector<std::size_t> floored_points() const;
};

DynamicsCurve extract_curve(const PositionDistributions& dists,
                            const LabelPositionIndex& index,
                            const LabelTokenMap& map,
                            std::span<const std::size_t> displayed);

/// Result of scoring one assembled input in a single logprobs call.
struct SinglePassResult {
  DynamicsCurve curve;
  LabelPositionIndex index;
  std::size_t total_tokens = 0;
  std::size_t sent_tokens = 0;
  /// Number of labeled examples in the input before any truncation.
  std::size_t sampled_length = 0;
};

/// Tokenize, locate label positions, request the label-token log-probs at
/// all of them in one call, and extract the curve. Tokens after the last
/// label position are not sent.
///
/// A non-zero `token_budget` truncates the curve to the examples whose label
/// position fits in the budget; TokenLimitError if not even the first does.
SinglePassResult evaluate_single_pass(const AssembledInput& assembled,
                                      std::span<const std::size_t> displayed,
                                      const Backend& backend,
                                      const LabelTokenMap& map,
                                      std::size_t token_budget = 0);

/// Classic few-shot evaluation: one prediction for a query appended after
/// `context_text` (which may be empty for zero-shot).
ClassPrediction classic_query_predict(std::string_view context_text,
                                      std::span<const std::string> query_inputs,
                                      const TemplateSpec& tmpl,
                                      const Backend& backend,
                                      const LabelTokenMap& map);

ClassPrediction classic_query_predict(const AssembledInput& context,
                                      std::span<const std::string> query_inputs,
                                      const TemplateSpec& tmpl,
                                      const Backend& backend,
                                      const LabelTokenMap& map);

/// Input text used for content-free calibration priors.
inline constexpr std::string_view kContentFreeInput = "N/A";

/// Calibration prior for every point of a single-pass curve over
/// `assembled`: the prediction for a content-free query rendered after the
/// same prompt and the same preceding examples. Costs one logprobs call per
/// point.
std::vector<std::vector<double>> content_free_priors(
    const AssembledInput& assembled, std::size_t points, const TemplateSpec& tmpl,
    const Backend& backend, const LabelTokenMap& map,
    std::string_view content_free = kContentFreeInput);

/// Probability of a multi-token label's continuation given its first token:
/// the product of p(t_k | context, t_1..t_{k-1}) over the continuation
/// tokens, for the label written after `text_to_cue` (text ending at the
/// label cue). Returns 1 for single-token labels.
double continuation_probability(std::string_view text_to_cue,
                                const LabelTokens& label, const Backend& backend);

}  // namespace icldyn
