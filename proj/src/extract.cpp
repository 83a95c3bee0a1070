#include "icldyn/extract.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icldyn/errors.hpp"

namespace icldyn {

ClassPrediction renormalize(std::span<const double> label_logprobs) {
  ClassPrediction out;
  const std::size_t n = label_logprobs.size();
  if (n == 0) throw DegenerateDistributionError("no label tokens requested");
  out.raw.resize(n);
  std::vector<double> floored(n);
  bool any_mass = false;
  for (std::size_t c = 0; c < n; ++c) {
    const double lp = label_logprobs[c];
    if (std::isnan(lp) || lp > 1e-6) {
      throw DegenerateDistributionError("label log-probability is not a valid log-probability");
    }
    out.raw[c] = std::exp(lp);
    if (lp >= kLogProbFloor) any_mass = true;
    if (lp < kLogProbFloor) out.floored = true;
    floored[c] = std::max(lp, kLogProbFloor);
  }
  if (!any_mass) {
    throw DegenerateDistributionError(
        "label tokens carry no probability mass at this position");
  }
  const double top = *std::max_element(floored.begin(), floored.end());
  double total = 0.0;
  out.probs.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    out.probs[c] = std::exp(floored[c] - top);
    total += out.probs[c];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

double DynamicsCurve::joint_log_prob() const {
  double sum = 0.0;
  for (const auto& pt : points) sum += std::log(pt.prediction.probs[pt.true_class]);
  return sum;
}

std::vector<std::size_t> DynamicsCurve::floored_points() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].prediction.floored) out.push_back(i);
  }
  return out;
}

DynamicsCurve extract_curve(const PositionDistributions& dists,
                            const LabelPositionIndex& index,
                            const LabelTokenMap& map,
                            std::span<const std::size_t> displayed) {
  const std::size_t n = index.positions.size();
  if (dists.rows() != n || displayed.size() != n) {
    throw Error("distributions, label positions and labels differ in length");
  }
  if (dists.cols() != map.num_classes()) {
    throw Error("need one log-prob column per class");
  }
  DynamicsCurve curve;
  curve.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (displayed[i] >= map.num_classes()) {
      throw Error("displayed class out of range");
    }
    try {
      curve.points.push_back(CurvePoint{renormalize(dists.row(i)), displayed[i]});
    } catch (const DegenerateDistributionError& e) {
      throw DegenerateDistributionError("context size " + std::to_string(i) +
                                        ": " + e.what());
    }
  }
  return curve;
}

SinglePassResult evaluate_single_pass(const AssembledInput& assembled,
                                      std::span<const std::size_t> displayed,
                                      const Backend& backend,
                                      const LabelTokenMap& map,
                                      std::size_t token_budget) {
  const Tokenizer& tokenizer = backend.tokenizer();
  const TokenIds tokens = tokenizer.tokenize(assembled.text);
  SinglePassResult result;
  result.index =
      index_label_positions(tokens, assembled, tokenizer, map, displayed);
  result.total_tokens = tokens.size();
  result.sampled_length = result.index.positions.size();
  if (token_budget > 0 && result.index.positions.back() > token_budget) {
    auto& pos = result.index.positions;
    const auto keep = static_cast<std::size_t>(
        std::upper_bound(pos.begin(), pos.end(), token_budget) - pos.begin());
    if (keep == 0) {
      throw TokenLimitError("first labeled example does not fit in " +
                            std::to_string(token_budget) + " tokens");
    }
    pos.resize(keep);
    result.index.expected.resize(keep);
    displayed = displayed.first(keep);
  }
  // The label token at the last position is not needed as conditioning.
  result.sent_tokens = result.index.positions.back();
  const std::span<const TokenId> sent(tokens.data(), result.sent_tokens);
  const TokenIds label_ids = map.first_tokens();
  const PositionDistributions dists =
      backend.logprobs(sent, result.index.positions, label_ids);
  result.curve = extract_curve(dists, result.index, map, displayed);
  return result;
}

ClassPrediction classic_query_predict(std::string_view context_text,
                                      std::span<const std::string> query_inputs,
                                      const TemplateSpec& tmpl,
                                      const Backend& backend,
                                      const LabelTokenMap& map) {
  std::string text(context_text);
  text += render_query(tmpl, query_inputs);
  const TokenIds tokens = backend.tokenizer().tokenize(text);
  const std::size_t position = tokens.size();
  const TokenIds label_ids = map.first_tokens();
  const PositionDistributions dists = backend.logprobs(
      tokens, std::span<const std::size_t>(&position, 1), label_ids);
  return renormalize(dists.row(0));
}

ClassPrediction classic_query_predict(const AssembledInput& context,
                                      std::span<const std::string> query_inputs,
                                      const TemplateSpec& tmpl,
                                      const Backend& backend,
                                      const LabelTokenMap& map) {
  return classic_query_predict(context.text, query_inputs, tmpl, backend, map);
}

std::vector<std::vector<double>> content_free_priors(
    const AssembledInput& assembled, std::size_t points, const TemplateSpec& tmpl,
    const Backend& backend, const LabelTokenMap& map, std::string_view content_free) {
  if (points > assembled.segments.size()) {
    throw Error("more calibration points than examples");
  }
  const std::vector<std::string> inputs(tmpl.arity(), std::string(content_free));
  std::vector<std::vector<double>> priors;
  priors.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const std::string_view context =
        std::string_view(assembled.text).substr(0, assembled.segments[i].full.begin);
    priors.push_back(classic_query_predict(context, inputs, tmpl, backend, map).probs);
  }
  return priors;
}

double continuation_probability(std::string_view text_to_cue,
                                const LabelTokens& label, const Backend& backend) {
  if (label.in_context.size() < 2) return 1.0;
  const Tokenizer& tokenizer = backend.tokenizer();
  const TokenIds prefix = tokenizer.tokenize(text_to_cue);
  std::string full(text_to_cue);
  full += ' ';
  full += label.name;
  const TokenIds tokens = tokenizer.tokenize(full);
  const std::size_t n = label.in_context.size();
  if (tokens.size() != prefix.size() + n ||
      !std::equal(label.in_context.begin(), label.in_context.end(),
                  tokens.begin() + static_cast<std::ptrdiff_t>(prefix.size()))) {
    throw AlignmentError("label '" + label.name +
                         "' does not tokenize the same way after this context");
  }
  double p = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t pos = prefix.size() + k;
    const TokenId id = label.in_context[k];
    const PositionDistributions d = backend.logprobs(
        std::span<const TokenId>(tokens.data(), pos),
        std::span<const std::size_t>(&pos, 1), std::span<const TokenId>(&id, 1));
    p *= std::exp(d.at(0, 0));
  }
  return p;
}

}  // namespace icldyn
