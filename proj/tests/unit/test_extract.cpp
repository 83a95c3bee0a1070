#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "icldyn/errors.hpp"
#include "icldyn/extract.hpp"
#include "icldyn/random.hpp"
#include "icldyn/reference_lm.hpp"
#include "icldyn/tokenalign.hpp"
#include "icldyn/transforms.hpp"
#include "test_support.hpp"

using namespace icldyn;
using icldyn::testing::CountingBackend;
using icldyn::testing::truncated_prefix_oracle;

namespace {

struct Fixture {
  TaskDataset dataset;
  TemplateSpec tmpl = sentence_template();
  std::shared_ptr<const WordTokenizer> tokenizer;
  std::shared_ptr<const Backend> echo;
  std::shared_ptr<const Backend> bayes;
  LabelTokenMap map;
};

Fixture make_fixture(WhitespaceMode mode, double prior = 0.5) {
  Fixture f;
  SyntheticTaskOptions o;
  o.size = 64;
  f.dataset = synthetic_task(o);
  std::vector<std::string> corpus;
  for (const auto& ex : f.dataset.examples()) {
    for (const auto& name : f.dataset.class_names()) {
      corpus.push_back(render_example(f.tmpl, ex.inputs, name));
    }
  }
  corpus.push_back(render_query(f.tmpl, std::vector<std::string>{"N/A"}));
  f.tokenizer = std::make_shared<WordTokenizer>(WordTokenizer::fit(corpus, mode));
  f.echo = std::make_shared<EchoLM>(f.tokenizer, f.tmpl, f.dataset.class_names(), 4096);
  f.bayes = std::make_shared<BayesianMappingLM>(f.tokenizer, f.tmpl, f.dataset.class_names(),
                                                o.lexicon, BayesParams{prior, 0.1}, 4096);
  f.map = resolve_label_tokens(*f.tokenizer, f.tmpl, f.dataset.class_names());
  return f;
}

std::vector<std::size_t> first_n(std::size_t n, std::uint64_t seed, std::size_t size) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(n);
  return idx;
}

/// Returns log-probs for any request: `value` everywhere.
class ConstantBackend final : public Backend {
 public:
  ConstantBackend(std::shared_ptr<const Tokenizer> tok, double value)
      : tok_(std::move(tok)), value_(value) {}
  const Tokenizer& tokenizer() const override { return *tok_; }
  PositionDistributions logprobs(std::span<const TokenId>, std::span<const std::size_t> positions,
                                 std::span<const TokenId> ids) const override {
    PositionDistributions d(positions.size(), ids.size());
    for (std::size_t r = 0; r < positions.size(); ++r) {
      for (std::size_t c = 0; c < ids.size(); ++c) d.at(r, c) = value_;
    }
    return d;
  }
  std::size_t max_input_tokens() const override { return 1 << 20; }
  std::string describe() const override { return "constant"; }

 private:
  std::shared_ptr<const Tokenizer> tok_;
  double value_;
};

}  // namespace

TEST(Renormalize, ProportionalRestriction) {
  const std::vector<double> lp{std::log(0.3), std::log(0.1)};
  const auto p = renormalize(lp);
  EXPECT_NEAR(p.probs[0], 0.75, 1e-12);
  EXPECT_NEAR(p.probs[1], 0.25, 1e-12);
  EXPECT_NEAR(p.raw[0], 0.3, 1e-12);
  EXPECT_FALSE(p.floored);
}

TEST(Renormalize, InvariantUnderConstantShift) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> lp(4);
    for (double& v : lp) v = -10.0 * rng.uniform01() - 0.5;
    const double shift = -5.0 * rng.uniform01();
    std::vector<double> shifted = lp;
    for (double& v : shifted) v += shift;
    const auto a = renormalize(lp), b = renormalize(shifted);
    double total = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(a.probs[c], b.probs[c], 1e-12);
      total += a.probs[c];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Renormalize, FloorAndDegenerateMass) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> lp{-inf, std::log(0.5)};
  const auto p = renormalize(lp);
  EXPECT_TRUE(p.floored);
  EXPECT_GT(p.probs[0], 0.0);
  EXPECT_NEAR(p.probs[1], 1.0, 1e-30);
  EXPECT_THROW(renormalize(std::vector<double>{-inf, -inf}), DegenerateDistributionError);
  EXPECT_THROW(renormalize(std::vector<double>{-100.0, -90.0}), DegenerateDistributionError);
  EXPECT_THROW(renormalize(std::vector<double>{0.5, -1.0}), DegenerateDistributionError);
}

class SinglePassEquivalence : public ::testing::TestWithParam<WhitespaceMode> {};

TEST_P(SinglePassEquivalence, MatchesTruncatedPrefixOracle) {
  const auto f = make_fixture(GetParam());
  for (const auto& backend : {f.echo, f.bayes}) {
    for (std::size_t n : {1u, 2u, 7u, 16u, 32u}) {
      const auto order = first_n(n, n * 31 + 7, f.dataset.size());
      TransformSpec spec;
      spec.labeling = RandomizeLabels{0.5};
      Rng rng(n);
      const auto labels = apply(spec, f.dataset, order, rng);
      const auto input = assemble(f.dataset, order, labels.label_strings, f.tmpl);
      const auto res = evaluate_single_pass(input, labels.displayed, *backend, f.map);
      ASSERT_EQ(res.curve.size(), n);
      std::string context;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = f.dataset[order[i]];
        const auto oracle = truncated_prefix_oracle(*backend, context, f.tmpl, ex.inputs,
                                                    f.map.first_tokens());
        for (std::size_t c = 0; c < 2; ++c) {
          EXPECT_NEAR(res.curve.points[i].prediction.probs[c], oracle[c], 1e-9)
              << backend->describe() << " n=" << n << " i=" << i;
        }
        EXPECT_EQ(res.curve.points[i].true_class, labels.displayed[i]);
        context += render_example(f.tmpl, ex.inputs, labels.label_strings[i]);
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Tokenizers, SinglePassEquivalence,
                         ::testing::Values(WhitespaceMode::merge, WhitespaceMode::dummy_prefix));

TEST(SinglePass, OneLogprobsCallWithoutTrailingTokens) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto counting = std::make_shared<CountingBackend>(f.echo);
  const auto order = first_n(10, 3, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const std::vector<std::size_t> displayed(labels.begin(), labels.end());
  const auto res = evaluate_single_pass(input, displayed, *counting, f.map);
  EXPECT_EQ(counting->calls, 1u);
  EXPECT_EQ(counting->last_tokens, res.index.positions.back());
  EXPECT_EQ(res.sent_tokens, res.index.positions.back());
  EXPECT_LT(res.sent_tokens, res.total_tokens);
}

TEST(SinglePass, TokenBudgetTruncatesAndRecordsSampledLength) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(10, 4, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const std::vector<std::size_t> displayed(labels.begin(), labels.end());
  const auto full = evaluate_single_pass(input, displayed, *f.echo, f.map);
  const std::size_t budget = full.index.positions[5];
  const auto cut = evaluate_single_pass(input, displayed, *f.echo, f.map, budget);
  EXPECT_EQ(cut.curve.size(), 6u);
  EXPECT_EQ(cut.sampled_length, 10u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(cut.curve.points[i].prediction.probs, full.curve.points[i].prediction.probs);
  }
  EXPECT_THROW(evaluate_single_pass(input, displayed, *f.echo, f.map, 3), TokenLimitError);
}

TEST(Classic, ZeroShotAndHypotheticalNextPoint) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(9, 5, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const std::vector<std::size_t> displayed(labels.begin(), labels.end());
  for (const auto& backend : {f.echo, f.bayes}) {
    const auto res = evaluate_single_pass(input, displayed, *backend, f.map);
    const auto zero = classic_query_predict("", f.dataset[order[0]].inputs, f.tmpl, *backend, f.map);
    EXPECT_NEAR(zero.probs[0], res.curve.points[0].prediction.probs[0], 1e-12);
    // Context of the first 8, query = example 9: equals point 9 of the curve.
    const std::vector<std::size_t> ctx(order.begin(), order.begin() + 8);
    const std::vector<ClassIndex> ctx_labels(labels.begin(), labels.begin() + 8);
    const auto context = assemble(f.dataset, ctx, ctx_labels, f.tmpl);
    const auto classic = classic_query_predict(context, f.dataset[order[8]].inputs, f.tmpl,
                                               *backend, f.map);
    EXPECT_NEAR(classic.probs[1], res.curve.points[8].prediction.probs[1], 1e-12);
  }
}

TEST(Classic, AnswerInContextRaisesCorrectProbability) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(9, 6, f.dataset.size());
  const std::size_t query = order.back();
  const std::vector<std::size_t> ctx(order.begin(), order.end() - 1);
  const std::size_t y = f.dataset[query].label;
  auto p_correct = [&](std::size_t k) {
    Rng rng(k);
    const auto plan = inject_repetitions(ctx, query, k, rng);
    std::vector<std::string> strings;
    for (auto i : plan.order) strings.push_back(f.dataset.class_names()[f.dataset[i].label]);
    const auto input = assemble(f.dataset, plan.order, strings, f.tmpl, std::nullopt,
                                RepeatPolicy::allow);
    return classic_query_predict(input, f.dataset[query].inputs, f.tmpl, *f.bayes, f.map).probs[y];
  };
  EXPECT_GT(p_correct(4), p_correct(0));
}

TEST(ContentFree, PriorsComeFromNaQueriesAfterTheSameContext) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(6, 8, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const auto priors = content_free_priors(input, 6, f.tmpl, *f.echo, f.map);
  ASSERT_EQ(priors.size(), 6u);
  std::string context;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto oracle = truncated_prefix_oracle(*f.echo, context, f.tmpl, {"N/A"},
                                                f.map.first_tokens());
    EXPECT_NEAR(priors[i][0], oracle[0], 1e-12);
    context += render_example(f.tmpl, f.dataset[order[i]].inputs,
                              f.dataset.class_names()[labels[i]]);
  }
  EXPECT_DOUBLE_EQ(priors[0][0], 0.5);
}

TEST(Continuation, ProductOverContinuationTokens) {
  const auto tok = icldyn::testing::falcon_like();
  const ConstantBackend half(tok, std::log(0.5));
  const std::vector<std::string> names{"objective", "subjective"};
  const auto map = resolve_label_tokens(*tok, sentence_template(), names);
  EXPECT_DOUBLE_EQ(continuation_probability("Sentence: 'I am happy'\nAnswer:", map[0], half), 1.0);
  EXPECT_DOUBLE_EQ(continuation_probability("Sentence: 'I am happy'\nAnswer:", map[1], half), 0.5);
}

TEST(Bayes, HandComputedPredictives) {
  const BayesParams p{0.5, 0.1};
  EXPECT_NEAR(bayes_predict(p, {}, 1)[1], 0.5, 1e-15);
  const std::vector<FeatureLabel> one{{1, 1}};
  EXPECT_NEAR(bayes_predict(p, one, 1)[1], 0.82, 1e-12);
  EXPECT_NEAR(bayes_predict(p, one, 0)[0], 0.82, 1e-12);
  const std::vector<FeatureLabel> cancel{{1, 1}, {0, 1}};
  EXPECT_NEAR(bayes_predict(p, cancel, 1)[1], 0.5, 1e-12);
}

TEST(Bayes, BackendPredictsPointTwoAtPointEightTwo) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(2, 1, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const std::vector<std::size_t> displayed(labels.begin(), labels.end());
  const auto res = evaluate_single_pass(input, displayed, *f.bayes, f.map);
  EXPECT_NEAR(res.curve.points[0].prediction.probs[labels[0]], 0.5, 1e-12);
  EXPECT_NEAR(res.curve.points[1].prediction.probs[labels[1]], 0.82, 1e-12);
}

TEST(Bayes, RandomizedLabelsStayNearChance) {
  // Expected predictive of the displayed label under fully random labels.
  const BayesParams p{0.5, 0.1};
  Rng rng(derive_seed(0, {99}));
  const std::size_t runs = 20000, K = 20;
  std::vector<double> mean(K, 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    std::vector<FeatureLabel> ctx;
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t x = rng.uniform_index(2), y = rng.uniform_index(2);
      mean[i] += bayes_predict(p, ctx, x)[y];
      ctx.push_back({x, y});
    }
  }
  for (double& m : mean) {
    m /= runs;
    EXPECT_NEAR(m, 0.5, 0.05);
  }
}

TEST(Bayes, DefaultLabelsImproveInExpectation) {
  const BayesParams p{0.5, 0.1};
  Rng rng(derive_seed(0, {98}));
  const std::size_t runs = 5000, K = 20;
  std::vector<double> mean(K, 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    std::vector<FeatureLabel> ctx;
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t x = rng.uniform_index(2);
      mean[i] += bayes_predict(p, ctx, x)[x] / runs;
      ctx.push_back({x, x});
    }
  }
  for (std::size_t i = 1; i < K; ++i) EXPECT_GE(mean[i] + 1e-12, mean[i - 1]);
}

TEST(ReferenceLM, PrefixPurity) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto order = first_n(5, 2, f.dataset.size());
  std::vector<ClassIndex> labels;
  for (auto i : order) labels.push_back(f.dataset[i].label);
  const auto input = assemble(f.dataset, order, labels, f.tmpl);
  const auto tokens = f.tokenizer->tokenize(input.text);
  const auto ids = f.map.first_tokens();
  for (const auto& backend : {f.echo, f.bayes}) {
    for (std::size_t l = 0; l <= tokens.size(); ++l) {
      const std::size_t pos = l;
      const auto full = backend->logprobs(tokens, std::span(&pos, 1), ids);
      const auto cut = backend->logprobs(std::span(tokens).first(l), std::span(&pos, 1), ids);
      EXPECT_EQ(full, cut);
    }
  }
}

TEST(ReferenceLM, NonLabelPositionsPutAllMassOnTheTemplate) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto tokens = f.tokenizer->tokenize("Sentence: 'the movie");
  const std::size_t pos = tokens.size();
  const auto d = f.echo->logprobs(tokens, std::span(&pos, 1), f.map.first_tokens());
  EXPECT_TRUE(std::isinf(d.at(0, 0)) && d.at(0, 0) < 0);
  EXPECT_THROW(f.echo->logprobs(tokens, std::vector<std::size_t>{pos + 1}, f.map.first_tokens()),
               BackendError);
}

TEST(ReferenceLM, FrequencyLMEmitsFrequencies) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const FrequencyLM lm(f.tokenizer, f.tmpl, f.dataset.class_names(), {0.9, 0.1}, 4096);
  const auto p = classic_query_predict("", f.dataset[0].inputs, f.tmpl, lm, f.map);
  EXPECT_NEAR(p.probs[0], 0.9, 1e-12);
}

TEST(ReferenceLM, ParseRecoversExamplesAndQuery) {
  const auto f = make_fixture(WhitespaceMode::merge);
  const auto& lm = dynamic_cast<const TemplateLM&>(*f.echo);
  const std::vector<std::string> a{"good movie"}, b{"bad plot"};
  const std::string text = render_example(f.tmpl, a, "positive") +
                           render_example(f.tmpl, b, "unknown") + render_query(f.tmpl, a);
  const auto ctx = lm.parse(text);
  ASSERT_EQ(ctx.examples.size(), 2u);
  EXPECT_EQ(ctx.examples[0].label, std::optional<std::size_t>(1));
  EXPECT_FALSE(ctx.examples[1].label.has_value());
  ASSERT_TRUE(ctx.query.has_value());
  EXPECT_EQ(*ctx.query, a);
}
