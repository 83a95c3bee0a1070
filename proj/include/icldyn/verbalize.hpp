#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icldyn/dataset.hpp"

namespace icldyn {

/// Example formatting. The query rendering is `body` (ending exactly at the
/// label cue); a full example is `body + " " + label + separator`, so the
/// example/query relationship holds by construction.
///
/// Input placeholders are `{sentence}` for single-input tasks and
/// `{sentence1}`, `{sentence2}` for pair tasks.
class TemplateSpec {
 public:
  TemplateSpec(std::string body, std::string label_cue,
               std::string separator = "\n\n");

  /// Parses a full example template such as
  /// "Sentence: '{sentence}'\nAnswer: {label}\n\n".
  static TemplateSpec from_example_template(std::string_view example_template,
                                            std::string label_cue);

  const std::string& body() const noexcept { return body_; }
  const std::string& label_cue() const noexcept { return label_cue_; }
  const std::string& separator() const noexcept { return separator_; }
  std::size_t arity() const noexcept { return arity_; }

  std::string example_template() const;
  std::string query_template() const { return body_; }

  bool operator==(const TemplateSpec&) const = default;

 private:
  std::string body_;
  std::string label_cue_;
  std::string separator_;
  std::size_t arity_ = 1;
};

/// SST-2, Subjectivity, Financial Phrasebank, Hate Speech, author id.
TemplateSpec sentence_template();
/// MRPC, WNLI, RTE.
TemplateSpec sentence_pair_template();
/// Medical Questions Pairs.
TemplateSpec question_pair_template();
/// Looks up one of "sentence", "sentence_pair", "question_pair".
TemplateSpec template_by_name(std::string_view name);

std::string render_query(const TemplateSpec& tmpl,
                         std::span<const std::string> inputs);
std::string render_example(const TemplateSpec& tmpl,
                           std::span<const std::string> inputs,
                           std::string_view label);

/// Inverse of render_query for text that ends with a rendered query. Text
/// before the query (a prompt or earlier examples) is ignored. Returns the
/// inputs, or nullopt when `text` does not end with a rendering of `tmpl`.
std::optional<std::vector<std::string>> parse_query(const TemplateSpec& tmpl,
                                                    std::string_view text);

struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const CharSpan&) const = default;
};

/// One rendered example inside the assembled text. `pre_label` runs from the
/// segment start through the space after the cue; `cue_end` is the offset
/// right after the cue (before that space).
struct Segment {
  CharSpan pre_label;
  CharSpan label;
  CharSpan full;
  std::size_t cue_end = 0;
};

struct AssembledInput {
  std::string text;
  std::optional<CharSpan> prompt_span;
  std::vector<Segment> segments;
  std::vector<std::size_t> example_order;
  std::vector<std::string> label_strings;
};

enum class RepeatPolicy { forbid, allow };

/// Concatenates `prompt` and the rendered examples in `order`, tracking each
/// label's character span.
AssembledInput assemble(const TaskDataset& dataset,
                        std::span<const std::size_t> order,
                        std::span<const std::string> label_strings,
                        const TemplateSpec& tmpl,
                        const std::optional<std::string>& prompt = std::nullopt,
                        RepeatPolicy repeats = RepeatPolicy::forbid);

/// Convenience overload: labels are class indices into the dataset's names.
AssembledInput assemble(const TaskDataset& dataset,
                        std::span<const std::size_t> order,
                        std::span<const ClassIndex> labels,
                        const TemplateSpec& tmpl,
                        const std::optional<std::string>& prompt = std::nullopt);

enum class PromptKind { instruct, ignore, invert };

PromptKind prompt_kind_from_name(std::string_view name);
std::string_view prompt_kind_name(PromptKind kind);

/// Prompt text placed before the in-context examples. The instruct prompt
/// spells out the rotation over `class_names`.
std::string prompt_text(PromptKind kind,
                        std::span<const std::string> class_names);

}  // namespace icldyn
