#include "icldyn/reference_lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "icldyn/errors.hpp"

namespace icldyn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

TemplateLM::TemplateLM(std::shared_ptr<const Tokenizer> tokenizer,
                       TemplateSpec tmpl, std::vector<std::string> class_names,
                       std::size_t max_input_tokens)
    : tokenizer_(std::move(tokenizer)),
      tmpl_(std::move(tmpl)),
      class_names_(std::move(class_names)),
      max_input_tokens_(max_input_tokens) {
  if (!tokenizer_) throw Error("reference LM needs a tokenizer");
  labels_ = resolve_label_tokens(*tokenizer_, tmpl_, class_names_);
  const TokenIds cue = tokenizer_->tokenize(tmpl_.label_cue());
  filler_token_ = cue.empty() ? WordTokenizer::kUnknown : cue.front();
  if (labels_.class_of(filler_token_) < labels_.num_classes()) {
    throw Error("label cue token collides with a label token");
  }
}

ParsedContext TemplateLM::parse(std::string_view text) const {
  ParsedContext out;
  const std::string& sep = tmpl_.separator();
  const std::string& cue = tmpl_.label_cue();
  std::size_t start = 0;
  for (auto at = text.find(sep); at != std::string_view::npos;
       at = text.find(sep, start)) {
    const std::string_view block = text.substr(start, at - start);
    start = at + sep.size();
    const auto cue_at = block.rfind(cue);
    if (cue_at == std::string_view::npos) continue;
    const std::size_t cue_end = cue_at + cue.size();
    auto inputs = parse_query(tmpl_, block.substr(0, cue_end));
    if (!inputs) continue;
    std::string_view label = block.substr(cue_end);
    if (!label.empty() && label.front() == ' ') label.remove_prefix(1);
    ParsedContext::Item item{std::move(*inputs), std::nullopt};
    auto it = std::find(class_names_.begin(), class_names_.end(), label);
    if (it != class_names_.end()) {
      item.label = static_cast<std::size_t>(it - class_names_.begin());
    }
    out.examples.push_back(std::move(item));
  }
  const std::string_view tail = text.substr(start);
  if (tail.size() >= cue.size() &&
      tail.substr(tail.size() - cue.size()) == cue) {
    out.query = parse_query(tmpl_, tail);
  }
  return out;
}

PositionDistributions TemplateLM::logprobs(std::span<const TokenId> tokens,
                                           std::span<const std::size_t> positions,
                                           std::span<const TokenId> token_ids) const {
  validate_logprob_request(tokens, positions, token_ids, max_input_tokens_,
                           tokenizer_->vocab_size());
  PositionDistributions out(positions.size(), token_ids.size());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const std::string prefix = tokenizer_->detokenize(tokens.first(positions[r]));
    const ParsedContext context = parse(prefix);
    if (context.query) {
      const std::vector<double> dist = label_distribution(context);
      for (std::size_t j = 0; j < token_ids.size(); ++j) {
        const std::size_t c = labels_.class_of(token_ids[j]);
        out.at(r, j) = c < dist.size() ? safe_log(dist[c]) : kNegInf;
      }
    } else {
      for (std::size_t j = 0; j < token_ids.size(); ++j) {
        out.at(r, j) = token_ids[j] == filler_token_ ? 0.0 : kNegInf;
      }
    }
  }
  return out;
}

std::vector<double> EchoLM::label_distribution(const ParsedContext& context) const {
  std::vector<double> counts(class_names().size(), 1.0);
  for (const auto& item : context.examples) {
    if (item.label) counts[*item.label] += 1.0;
  }
  double total = 0.0;
  for (double c : counts) total += c;
  for (double& c : counts) c /= total;
  return counts;
}

FrequencyLM::FrequencyLM(std::shared_ptr<const Tokenizer> tokenizer,
                         TemplateSpec tmpl, std::vector<std::string> class_names,
                         std::vector<double> frequencies,
                         std::size_t max_input_tokens)
    : TemplateLM(std::move(tokenizer), std::move(tmpl), std::move(class_names),
                 max_input_tokens),
      frequencies_(std::move(frequencies)) {
  if (frequencies_.size() != this->class_names().size()) {
    throw Error("frequency LM needs one frequency per class");
  }
}

std::vector<double> FrequencyLM::label_distribution(const ParsedContext&) const {
  return frequencies_;
}

std::array<double, 2> bayes_predict(const BayesParams& params,
                                    std::span<const FeatureLabel> context,
                                    std::size_t query_feature) {
  const double rho = params.prior_identity;
  const double eps = params.noise;
  const double step = std::log1p(-eps) - std::log(eps);
  double log_odds = std::log(rho) - std::log1p(-rho);
  for (const auto& obs : context) {
    log_odds += obs.label == obs.feature ? step : -step;
  }
  const double p_identity = log_odds >= 0.0
                                ? 1.0 / (1.0 + std::exp(-log_odds))
                                : std::exp(log_odds) / (1.0 + std::exp(log_odds));
  const double p_match = p_identity * (1.0 - eps) + (1.0 - p_identity) * eps;
  std::array<double, 2> out{};
  out[query_feature] = p_match;
  out[1 - query_feature] = 1.0 - p_match;
  return out;
}

BayesianMappingLM::BayesianMappingLM(std::shared_ptr<const Tokenizer> tokenizer,
                                     TemplateSpec tmpl,
                                     std::vector<std::string> class_names,
                                     std::vector<std::vector<std::string>> lexicon,
                                     BayesParams params,
                                     std::size_t max_input_tokens)
    : TemplateLM(std::move(tokenizer), std::move(tmpl), std::move(class_names),
                 max_input_tokens),
      lexicon_(std::move(lexicon)),
      params_(params) {
  if (this->class_names().size() != 2 || lexicon_.size() != 2) {
    throw Error("the Bayesian mapping LM is defined for binary tasks");
  }
  if (!(params_.prior_identity > 0.0 && params_.prior_identity < 1.0)) {
    throw Error("prior must lie strictly between 0 and 1");
  }
  if (!(params_.noise > 0.0 && params_.noise < 0.5)) {
    throw Error("label noise must lie strictly between 0 and 0.5");
  }
  for (auto& words : lexicon_) {
    for (auto& w : words) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
      });
    }
  }
}

std::size_t BayesianMappingLM::feature(std::span<const std::string> inputs) const {
  std::array<std::size_t, 2> hits{0, 0};
  for (const auto& input : inputs) {
    for (const auto& word : lower_words(input)) {
      for (std::size_t c = 0; c < 2; ++c) {
        if (std::find(lexicon_[c].begin(), lexicon_[c].end(), word) !=
            lexicon_[c].end()) {
          ++hits[c];
        }
      }
    }
  }
  return hits[1] > hits[0] ? 1 : 0;
}

std::vector<double> BayesianMappingLM::label_distribution(
    const ParsedContext& context) const {
  std::vector<FeatureLabel> observed;
  observed.reserve(context.examples.size());
  for (const auto& item : context.examples) {
    if (item.label) observed.push_back({feature(item.inputs), *item.label});
  }
  const auto p = bayes_predict(params_, observed, feature(*context.query));
  return {p[0], p[1]};
}

}  // namespace icldyn
