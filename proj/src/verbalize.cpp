#include "icldyn/verbalize.hpp"

#include <algorithm>
#include <set>

#include "icldyn/errors.hpp"

namespace icldyn {

namespace {

constexpr std::string_view kLabelPlaceholder = "{label}";

struct Placeholder {
  std::size_t pos;
  std::size_t len;
  std::size_t input;
};

/// Locates input placeholders in a template body.
std::vector<Placeholder> scan_placeholders(std::string_view body) {
  std::vector<Placeholder> found;
  static constexpr std::string_view names[] = {"{sentence}", "{sentence1}",
                                               "{sentence2}"};
  for (std::size_t pos = 0; pos < body.size(); ++pos) {
    if (body[pos] != '{') continue;
    for (std::size_t k = 0; k < 3; ++k) {
      if (body.substr(pos, names[k].size()) == names[k]) {
        found.push_back({pos, names[k].size(), k == 0 ? 0 : k - 1});
        break;
      }
    }
  }
  return found;
}

std::size_t count_occurrences(std::string_view haystack,
                              std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++count;
  }
  return count;
}

}  // namespace

TemplateSpec::TemplateSpec(std::string body, std::string label_cue,
                           std::string separator)
    : body_(std::move(body)),
      label_cue_(std::move(label_cue)),
      separator_(std::move(separator)) {
  if (label_cue_.empty()) throw TemplateError("label cue must not be empty");
  if (body_.size() < label_cue_.size() ||
      body_.compare(body_.size() - label_cue_.size(), label_cue_.size(),
                    label_cue_) != 0) {
    throw TemplateError("template body must end with the label cue '" +
                        label_cue_ + "'");
  }
  if (count_occurrences(body_, label_cue_) != 1) {
    throw TemplateError("label cue must occur exactly once in the template");
  }
  const auto holders = scan_placeholders(body_);
  bool single = false;
  bool pair = false;
  for (const auto& h : holders) {
    if (h.len == std::string_view("{sentence}").size()) {
      single = true;
    } else {
      pair = true;
    }
  }
  if (single == pair) {
    throw TemplateError(
        "template must use either {sentence} or {sentence1}/{sentence2}");
  }
  arity_ = single ? 1 : 2;
  if (pair) {
    std::set<std::size_t> inputs;
    for (const auto& h : holders) inputs.insert(h.input);
    if (inputs.size() != 2) {
      throw TemplateError("pair template needs both {sentence1} and {sentence2}");
    }
  }
}

TemplateSpec TemplateSpec::from_example_template(
    std::string_view example_template, std::string label_cue) {
  const auto at = example_template.rfind(kLabelPlaceholder);
  if (at == std::string_view::npos || at == 0 ||
      example_template[at - 1] != ' ') {
    throw TemplateError(
        "example template needs ' {label}' after the label cue");
  }
  std::string body(example_template.substr(0, at - 1));
  std::string separator(example_template.substr(at + kLabelPlaceholder.size()));
  return TemplateSpec(std::move(body), std::move(label_cue),
                      std::move(separator));
}

std::string TemplateSpec::example_template() const {
  return body_ + " " + std::string(kLabelPlaceholder) + separator_;
}

TemplateSpec sentence_template() {
  return TemplateSpec("Sentence: '{sentence}'\nAnswer:", "Answer:");
}

TemplateSpec sentence_pair_template() {
  return TemplateSpec("Sentence 1: '{sentence1}'\nSentence 2: '{sentence2}'\nAnswer:",
                      "Answer:");
}

TemplateSpec question_pair_template() {
  return TemplateSpec("Question 1: '{sentence1}'\nQuestion 2: '{sentence2}'\nAnswer:",
                      "Answer:");
}

TemplateSpec template_by_name(std::string_view name) {
  if (name == "sentence") return sentence_template();
  if (name == "sentence_pair") return sentence_pair_template();
  if (name == "question_pair") return question_pair_template();
  throw TemplateError("unknown template '" + std::string(name) + "'");
}

std::string render_query(const TemplateSpec& tmpl,
                         std::span<const std::string> inputs) {
  if (inputs.size() != tmpl.arity()) {
    throw TemplateError("template expects " + std::to_string(tmpl.arity()) +
                        " inputs, got " + std::to_string(inputs.size()));
  }
  const std::string& body = tmpl.body();
  std::string out;
  out.reserve(body.size() + 64);
  std::size_t cursor = 0;
  for (const auto& h : scan_placeholders(body)) {
    out.append(body, cursor, h.pos - cursor);
    out += inputs[h.input];
    cursor = h.pos + h.len;
  }
  out.append(body, cursor, std::string::npos);
  if (count_occurrences(out, tmpl.label_cue()) != 1) {
    throw TemplateError("label cue '" + tmpl.label_cue() +
                        "' must occur exactly once per rendered example");
  }
  return out;
}

std::string render_example(const TemplateSpec& tmpl,
                           std::span<const std::string> inputs,
                           std::string_view label) {
  std::string out = render_query(tmpl, inputs);
  out += ' ';
  out += label;
  out += tmpl.separator();
  return out;
}

std::optional<std::vector<std::string>> parse_query(const TemplateSpec& tmpl,
                                                    std::string_view text) {
  const std::string& body = tmpl.body();
  const auto holders = scan_placeholders(body);
  // Literal pieces between placeholders: lits[0] {in} lits[1] ... lits[n].
  std::vector<std::string_view> lits;
  std::size_t cursor = 0;
  for (const auto& h : holders) {
    lits.push_back(std::string_view(body).substr(cursor, h.pos - cursor));
    cursor = h.pos + h.len;
  }
  lits.push_back(std::string_view(body).substr(cursor));

  std::vector<std::string> inputs(tmpl.arity());
  std::size_t end = text.size();
  const auto& last = lits.back();
  if (end < last.size() || text.substr(end - last.size()) != last) {
    return std::nullopt;
  }
  end -= last.size();
  for (std::size_t k = holders.size(); k > 0; --k) {
    const auto& lit = lits[k - 1];
    const auto at = text.substr(0, end).rfind(lit);
    if (at == std::string_view::npos) return std::nullopt;
    inputs[holders[k - 1].input] =
        std::string(text.substr(at + lit.size(), end - at - lit.size()));
    end = at;
  }
  return inputs;
}

AssembledInput assemble(const TaskDataset& dataset,
                        std::span<const std::size_t> order,
                        std::span<const std::string> label_strings,
                        const TemplateSpec& tmpl,
                        const std::optional<std::string>& prompt,
                        RepeatPolicy repeats) {
  if (order.empty()) throw AssemblyError("cannot assemble an empty context");
  if (label_strings.size() != order.size()) {
    throw AssemblyError("need exactly one label per context example");
  }
  if (repeats == RepeatPolicy::forbid) {
    std::set<std::size_t> seen;
    for (auto idx : order) {
      if (!seen.insert(idx).second) {
        throw AssemblyError("example " + std::to_string(idx) +
                            " appears twice in the context");
      }
    }
  }

  AssembledInput out;
  if (prompt && !prompt->empty()) {
    out.text = *prompt;
    out.prompt_span = CharSpan{0, prompt->size()};
  }
  out.segments.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= dataset.size()) {
      throw AssemblyError("example index out of range");
    }
    const auto& ex = dataset[order[i]];
    const std::size_t begin = out.text.size();
    out.text += render_query(tmpl, ex.inputs);
    const std::size_t cue_end = out.text.size();
    out.text += ' ';
    const std::size_t label_begin = out.text.size();
    out.text += label_strings[i];
    const std::size_t label_end = out.text.size();
    out.text += tmpl.separator();
    out.segments.push_back(Segment{CharSpan{begin, label_begin},
                                   CharSpan{label_begin, label_end},
                                   CharSpan{begin, out.text.size()}, cue_end});
  }
  out.example_order.assign(order.begin(), order.end());
  out.label_strings.assign(label_strings.begin(), label_strings.end());
  return out;
}

AssembledInput assemble(const TaskDataset& dataset,
                        std::span<const std::size_t> order,
                        std::span<const ClassIndex> labels,
                        const TemplateSpec& tmpl,
                        const std::optional<std::string>& prompt) {
  std::vector<std::string> strings;
  strings.reserve(labels.size());
  for (auto c : labels) {
    if (c >= dataset.num_classes()) {
      throw AssemblyError("label index out of range");
    }
    strings.push_back(dataset.class_names()[c]);
  }
  return assemble(dataset, order, strings, tmpl, prompt);
}

PromptKind prompt_kind_from_name(std::string_view name) {
  if (name == "instruct") return PromptKind::instruct;
  if (name == "ignore") return PromptKind::ignore;
  if (name == "invert") return PromptKind::invert;
  throw TemplateError("unknown prompt '" + std::string(name) + "'");
}

std::string_view prompt_kind_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::instruct:
      return "instruct";
    case PromptKind::ignore:
      return "ignore";
    case PromptKind::invert:
      return "invert";
  }
  return "";
}

std::string prompt_text(PromptKind kind,
                        std::span<const std::string> class_names) {
  std::string out = "In the following, ";
  switch (kind) {
    case PromptKind::instruct: {
      const std::size_t n = class_names.size();
      for (std::size_t c = 0; c < n; ++c) {
        if (c > 0) out += (c + 1 == n) ? " and " : ", ";
        out += class_names[c];
        out += " means ";
        out += class_names[(c + 1) % n];
      }
      out += ". ";
      break;
    }
    case PromptKind::ignore:
      out += "ignore all prior knowledge. ";
      break;
    case PromptKind::invert:
      out += "flip the meaning for all answers. ";
      break;
  }
  return out;
}

}  // namespace icldyn
