#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "icldyn/dataset.hpp"
#include "icldyn/errors.hpp"
#include "icldyn/random.hpp"
#include "icldyn/tokenizer.hpp"
#include "icldyn/verbalize.hpp"
#include "test_support.hpp"

using namespace icldyn;

namespace {

TaskDataset tiny_sentiment() {
  return TaskDataset("sst2", {"negative", "positive"},
                     {{{"I am happy"}, 1}, {{"I am sad"}, 0}, {{"great fun"}, 1}});
}

}  // namespace

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
  EXPECT_NE(derive_seed(7, {1}), derive_seed(8, {1}));
  Rng a(derive_seed(3, {0})), b(derive_seed(3, {0}));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformIndexStaysInRangeAndCoversIt) {
  Rng rng(11);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(5);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(std::span<int>(v));
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 10u);
}

TEST(Dataset, FrequenciesAreTheLabelMarginal) {
  const auto d = tiny_sentiment();
  ASSERT_EQ(d.class_frequencies().size(), 2u);
  EXPECT_DOUBLE_EQ(d.class_frequencies()[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(d.class_frequencies()[1], 2.0 / 3.0);
  EXPECT_EQ(d.arity(), 1u);
}

TEST(Dataset, RejectsInvalidTasks) {
  EXPECT_THROW(TaskDataset("x", {"a"}, {{{"t"}, 0}}), DatasetError);
  EXPECT_THROW(TaskDataset("x", {"a", "a"}, {{{"t"}, 0}}), DatasetError);
  EXPECT_THROW(TaskDataset("x", {"a", "b"}, {{{"t"}, 2}}), DatasetError);
  EXPECT_THROW(TaskDataset("x", {"a", "b"}, {}), DatasetError);
}

TEST(Dataset, JsonlRoundTrip) {
  std::istringstream in(
      "{\"name\": \"pairs\", \"class_names\": [\"no\", \"yes\"]}\n"
      "{\"text1\": \"a\", \"text2\": \"b\", \"label\": \"yes\"}\n"
      "{\"text1\": \"c\", \"text2\": \"d\", \"label\": 0}\n");
  const auto d = parse_dataset(in);
  EXPECT_EQ(d.name(), "pairs");
  EXPECT_EQ(d.arity(), 2u);
  EXPECT_EQ(d[0].label, 1u);
  std::ostringstream out;
  write_dataset(out, d);
  std::istringstream again(out.str());
  const auto e = parse_dataset(again);
  EXPECT_EQ(e.class_names(), d.class_names());
  EXPECT_EQ(e[1].inputs, d[1].inputs);
  EXPECT_EQ(e[1].label, d[1].label);
}

TEST(Dataset, UnknownLabelIsAnError) {
  std::istringstream in("{\"class_names\": [\"no\", \"yes\"]}\n{\"text\": \"a\", \"label\": \"maybe\"}\n");
  EXPECT_THROW(parse_dataset(in), DatasetError);
}

TEST(Dataset, SyntheticTaskIsBalancedAndCarriesOneLexiconWord) {
  SyntheticTaskOptions o;
  o.size = 100;
  const auto d = synthetic_task(o);
  EXPECT_EQ(d.size(), 100u);
  EXPECT_DOUBLE_EQ(d.class_frequencies()[0], 0.5);
  for (const auto& ex : d.examples()) {
    int hits = 0;
    std::istringstream words(ex.inputs[0]);
    for (std::string w; words >> w;) {
      for (const auto& lw : o.lexicon[ex.label]) hits += w == lw;
    }
    EXPECT_EQ(hits, 1);
  }
}

TEST(Verbalize, RendersTheSentenceTemplate) {
  const std::vector<std::string> in{"I am happy"};
  EXPECT_EQ(render_example(sentence_template(), in, "positive"),
            "Sentence: 'I am happy'\nAnswer: positive\n\n");
  const std::vector<std::string> empty{""};
  EXPECT_EQ(render_example(sentence_template(), empty, "negative"),
            "Sentence: ''\nAnswer: negative\n\n");
}

TEST(Verbalize, RendersTheQuestionPairTemplate) {
  const std::vector<std::string> in{"Q1 text", "Q2 text"};
  EXPECT_EQ(render_example(question_pair_template(), in, "yes"),
            "Question 1: 'Q1 text'\nQuestion 2: 'Q2 text'\nAnswer: yes\n\n");
}

TEST(Verbalize, ExampleIsQueryPlusSpaceLabelSeparator) {
  for (const auto& t : {sentence_template(), sentence_pair_template(), question_pair_template()}) {
    const std::vector<std::string> in(t.arity(), "some text");
    EXPECT_EQ(render_example(t, in, "lbl"), render_query(t, in) + " lbl" + t.separator());
    EXPECT_EQ(t.example_template(), t.query_template() + " {label}" + t.separator());
    const auto parsed = parse_query(t, "prefix junk " + render_query(t, in));
    ASSERT_TRUE(parsed.has_value());
    EXPECT_EQ(*parsed, in);
  }
}

TEST(Verbalize, ArityMismatchIsATemplateError) {
  const std::vector<std::string> two{"a", "b"};
  EXPECT_THROW(render_query(sentence_template(), two), TemplateError);
}

TEST(Verbalize, CustomTemplateWithAnotherCue) {
  const auto t = TemplateSpec::from_example_template("Text: {sentence}\nLabel: {label}\n", "Label:");
  const std::vector<std::string> in{"x"};
  EXPECT_EQ(render_example(t, in, "A"), "Text: x\nLabel: A\n");
  EXPECT_THROW(TemplateSpec::from_example_template("Text: {sentence} {label}\n", "Label:"),
               TemplateError);
}

TEST(Verbalize, AssembleTracksSpans) {
  const auto d = tiny_sentiment();
  const std::vector<std::size_t> order{0, 1};
  const std::vector<ClassIndex> labels{1, 0};
  const auto a = assemble(d, order, labels, sentence_template());
  EXPECT_EQ(a.text,
            "Sentence: 'I am happy'\nAnswer: positive\n\n"
            "Sentence: 'I am sad'\nAnswer: negative\n\n");
  ASSERT_EQ(a.segments.size(), 2u);
  EXPECT_FALSE(a.prompt_span.has_value());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& s = a.segments[i];
    EXPECT_EQ(s.full.begin, cursor);
    EXPECT_EQ(s.pre_label.begin, s.full.begin);
    EXPECT_EQ(s.pre_label.end, s.label.begin);
    EXPECT_EQ(a.text.substr(s.label.begin, s.label.size()), a.label_strings[i]);
    EXPECT_EQ(a.text.substr(s.cue_end - 7, 7), "Answer:");
    cursor = s.full.end;
  }
  EXPECT_EQ(cursor, a.text.size());
}

TEST(Verbalize, PromptSpanCoversThePrefix) {
  const auto d = tiny_sentiment();
  const std::vector<std::size_t> order{0, 1};
  const std::vector<ClassIndex> labels{1, 0};
  const std::string prompt =
      "In the following, negative means positive and positive means negative. ";
  const auto a = assemble(d, order, labels, sentence_template(), prompt);
  ASSERT_TRUE(a.prompt_span.has_value());
  EXPECT_EQ(a.prompt_span->begin, 0u);
  EXPECT_EQ(a.prompt_span->end, prompt.size());
  EXPECT_EQ(a.segments.front().full.begin, prompt.size());
  EXPECT_EQ(a.text.substr(0, prompt.size()), prompt);
}

TEST(Verbalize, PermutedOrderGivesSameSegmentsDifferentText) {
  const auto d = tiny_sentiment();
  const std::vector<ClassIndex> l1{0, 1, 1}, l2{1, 0, 1};
  const std::vector<std::size_t> o1{2, 0, 1}, o2{0, 1, 2};
  std::vector<ClassIndex> lab1, lab2;
  for (auto i : o1) lab1.push_back(d[i].label);
  for (auto i : o2) lab2.push_back(d[i].label);
  const auto a = assemble(d, o1, lab1, sentence_template());
  const auto b = assemble(d, o2, lab2, sentence_template());
  EXPECT_NE(a.text, b.text);
  std::multiset<std::string> sa, sb;
  for (const auto& s : a.segments) sa.insert(a.text.substr(s.full.begin, s.full.size()));
  for (const auto& s : b.segments) sb.insert(b.text.substr(s.full.begin, s.full.size()));
  EXPECT_EQ(sa, sb);
}

TEST(Verbalize, EmptyOrderIsAnAssemblyError) {
  const auto d = tiny_sentiment();
  const std::vector<std::size_t> order;
  const std::vector<ClassIndex> labels;
  EXPECT_THROW(assemble(d, order, labels, sentence_template()), AssemblyError);
}

TEST(Verbalize, RepeatsNeedExplicitPermission) {
  const auto d = tiny_sentiment();
  const std::vector<std::size_t> order{0, 0};
  const std::vector<std::string> labels{"positive", "positive"};
  EXPECT_THROW(assemble(d, order, labels, sentence_template()), AssemblyError);
  EXPECT_NO_THROW(assemble(d, order, labels, sentence_template(), std::nullopt,
                           RepeatPolicy::allow));
}

TEST(Verbalize, InstructPromptSpellsOutTheRotation) {
  const std::vector<std::string> names{"negative", "positive"};
  EXPECT_EQ(prompt_text(PromptKind::instruct, names),
            "In the following, negative means positive and positive means negative. ");
}

TEST(Tokenizer, FalconLikeWhitespaceMerge) {
  const auto tok = icldyn::testing::falcon_like();
  EXPECT_EQ(tok->tokenize("Answer:"), (TokenIds{20309, 37}));
  EXPECT_EQ(tok->tokenize("Answer: "), (TokenIds{20309, 37, 204}));
  EXPECT_EQ(tok->tokenize("Answer: positive"), (TokenIds{20309, 37, 3508}));
  EXPECT_EQ(tok->tokenize("positive"), (TokenIds{28265}));
}

TEST(Tokenizer, LlamaLikeDummyPrefix) {
  const auto tok = icldyn::testing::llama_like();
  EXPECT_EQ(tok->tokenize("Answer:"), (TokenIds{673, 29901}));
  EXPECT_EQ(tok->tokenize("Answer: "), (TokenIds{673, 29901, 29871}));
  EXPECT_EQ(tok->tokenize("Answer: positive"), (TokenIds{673, 29901, 6374}));
  EXPECT_EQ(tok->tokenize("positive"), (TokenIds{6374}));
}

TEST(Tokenizer, RoundTripsTemplateText) {
  const std::vector<std::string> in{"I am happy"};
  const std::string text = render_example(sentence_template(), in, "positive");
  for (const auto& tok : {icldyn::testing::falcon_like(), icldyn::testing::llama_like()}) {
    EXPECT_EQ(tok->detokenize(tok->tokenize(text)), text);
  }
}

TEST(Tokenizer, UnknownAndGreedySplit) {
  const auto tok = icldyn::testing::falcon_like();
  EXPECT_EQ(tok->tokenize(" subjective"), (TokenIds{3024, 548}));
  EXPECT_EQ(tok->tokenize("zzz"), (TokenIds{WordTokenizer::kUnknown}));
}

TEST(Tokenizer, FittedVocabularyCountsTemplateTokens) {
  // "Sentence: '{s}'\nAnswer: {label}\n\n" costs n + 10 tokens for n words.
  std::string words;
  for (int i = 0; i < 90; ++i) words += (i ? " w" : "w") + std::to_string(i);
  const std::vector<std::string> in{words};
  const std::vector<std::string> corpus{render_example(sentence_template(), in, "positive")};
  const auto tok = WordTokenizer::fit(corpus, WhitespaceMode::merge);
  EXPECT_EQ(tok.tokenize(corpus[0]).size(), 100u);
}
