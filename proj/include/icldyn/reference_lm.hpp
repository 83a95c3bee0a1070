#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icldyn/backend.hpp"
#include "icldyn/tokenalign.hpp"
#include "icldyn/verbalize.hpp"

namespace icldyn {

/// What a reference LM sees when it reads its prefix back as text.
struct ParsedContext {
  struct Item {
    std::vector<std::string> inputs;
    /// Index into the model's class names; nullopt for unknown labels.
    std::optional<std::size_t> label;
  };
  std::vector<Item> examples;
  /// Inputs of the query when the prefix ends exactly at a label cue.
  std::optional<std::vector<std::string>> query;
};

/// Base for closed-form test LMs over a word-level tokenizer.
///
/// At a position whose prefix ends at the label cue the model emits a
/// distribution over the first tokens of its class names; everywhere else
/// it puts probability 1 on the first cue token, so a misplaced label
/// query sees zero label mass.
class TemplateLM : public Backend {
 public:
  TemplateLM(std::shared_ptr<const Tokenizer> tokenizer, TemplateSpec tmpl,
             std::vector<std::string> class_names,
             std::size_t max_input_tokens);

  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  PositionDistributions logprobs(std::span<const TokenId> tokens,
                                 std::span<const std::size_t> positions,
                                 std::span<const TokenId> token_ids) const override;
  std::size_t max_input_tokens() const override { return max_input_tokens_; }

  const TemplateSpec& template_spec() const noexcept { return tmpl_; }
  const std::vector<std::string>& class_names() const noexcept {
    return class_names_;
  }
  const LabelTokenMap& label_tokens() const noexcept { return labels_; }

  /// Parses the text of a token prefix.
  ParsedContext parse(std::string_view prefix_text) const;

  /// Class distribution for the query of `context` (context.query is set).
  virtual std::vector<double> label_distribution(
      const ParsedContext& context) const = 0;

 private:
  std::shared_ptr<const Tokenizer> tokenizer_;
  TemplateSpec tmpl_;
  std::vector<std::string> class_names_;
  LabelTokenMap labels_;
  TokenId filler_token_;
  std::size_t max_input_tokens_;
};

/// Deterministic label-frequency echo: p(c) proportional to 1 + the number
/// of in-context examples labeled c.
class EchoLM final : public TemplateLM {
 public:
  using TemplateLM::TemplateLM;
  std::vector<double> label_distribution(const ParsedContext& context) const override;
  std::string describe() const override { return "echo"; }
};

/// Emits the same class distribution at every label position (the
/// informed guessing predictor when given the class frequencies).
class FrequencyLM final : public TemplateLM {
 public:
  FrequencyLM(std::shared_ptr<const Tokenizer> tokenizer, TemplateSpec tmpl,
              std::vector<std::string> class_names,
              std::vector<double> frequencies, std::size_t max_input_tokens);
  std::vector<double> label_distribution(const ParsedContext& context) const override;
  std::string describe() const override { return "frequency"; }

 private:
  std::vector<double> frequencies_;
};

struct BayesParams {
  /// Prior probability of the identity mapping between latent class and label.
  double prior_identity = 0.5;
  /// Label noise.
  double noise = 0.1;
};

/// One observed (latent feature, displayed label) pair, both binary.
struct FeatureLabel {
  std::size_t feature;
  std::size_t label;
};

/// Exact predictive of the two-hypothesis (identity / flip) label mapping
/// learner. Returns p(label = 0), p(label = 1) for a query with
/// `query_feature`.
std::array<double, 2> bayes_predict(const BayesParams& params,
                                    std::span<const FeatureLabel> context,
                                    std::size_t query_feature);

/// Binary Bayesian label-mapping learner over a lexicon feature: the latent
/// class of an input is the class whose lexicon words occur most often in
/// it (ties go to class 0).
class BayesianMappingLM final : public TemplateLM {
 public:
  BayesianMappingLM(std::shared_ptr<const Tokenizer> tokenizer,
                    TemplateSpec tmpl, std::vector<std::string> class_names,
                    std::vector<std::vector<std::string>> lexicon,
                    BayesParams params, std::size_t max_input_tokens);

  std::size_t feature(std::span<const std::string> inputs) const;
  std::vector<double> label_distribution(const ParsedContext& context) const override;
  std::string describe() const override { return "bayes"; }
  const BayesParams& params() const noexcept { return params_; }

 private:
  std::vector<std::vector<std::string>> lexicon_;
  BayesParams params_;
};

}  // namespace icldyn
