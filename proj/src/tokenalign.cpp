#include "icldyn/tokenalign.hpp"

#include <algorithm>
#include <map>

#include "icldyn/errors.hpp"

namespace icldyn {

namespace {

bool is_prefix(std::span<const TokenId> prefix, std::span<const TokenId> full) {
  return prefix.size() <= full.size() &&
         std::equal(prefix.begin(), prefix.end(), full.begin());
}

std::string format_ids(std::span<const TokenId> ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out + "]";
}

}  // namespace

LabelTokenMap::LabelTokenMap(std::vector<LabelTokens> labels)
    : labels_(std::move(labels)) {
  std::map<TokenId, std::size_t> owner;
  for (std::size_t c = 0; c < labels_.size(); ++c) {
    auto [it, inserted] = owner.emplace(labels_[c].first, c);
    if (!inserted) {
      throw UniquenessError("labels '" + labels_[it->second].name + "' and '" +
                            labels_[c].name + "' share first token " +
                            std::to_string(labels_[c].first));
    }
  }
}

TokenIds LabelTokenMap::first_tokens() const {
  TokenIds out;
  out.reserve(labels_.size());
  for (const auto& l : labels_) out.push_back(l.first);
  return out;
}

std::size_t LabelTokenMap::class_of(TokenId id) const {
  for (std::size_t c = 0; c < labels_.size(); ++c) {
    if (labels_[c].first == id) return c;
  }
  return labels_.size();
}

LabelTokenMap resolve_label_tokens(const Tokenizer& tokenizer,
                                   const TemplateSpec& tmpl,
                                   std::span<const std::string> class_names) {
  const TokenIds cue = tokenizer.tokenize(tmpl.label_cue());
  std::vector<LabelTokens> labels;
  labels.reserve(class_names.size());
  for (const auto& name : class_names) {
    const TokenIds with_label =
        tokenizer.tokenize(tmpl.label_cue() + " " + name);
    if (!is_prefix(cue, with_label)) {
      throw AlignmentError("tokenization of '" + tmpl.label_cue() +
                           "' changes when followed by ' " + name + "': " +
                           format_ids(cue) + " vs " + format_ids(with_label));
    }
    if (with_label.size() == cue.size()) {
      throw AlignmentError("label '" + name + "' encodes to no tokens");
    }
    LabelTokens entry;
    entry.name = name;
    entry.first = with_label[cue.size()];
    entry.in_context.assign(with_label.begin() + static_cast<std::ptrdiff_t>(cue.size()),
                            with_label.end());
    entry.naked = tokenizer.tokenize(name);
    labels.push_back(std::move(entry));
  }
  return LabelTokenMap(std::move(labels));
}

LabelPositionIndex index_label_positions(std::span<const TokenId> full_tokens,
                                         const AssembledInput& assembled,
                                         const Tokenizer& tokenizer,
                                         const LabelTokenMap& map,
                                         std::span<const std::size_t> displayed) {
  if (displayed.size() != assembled.segments.size()) {
    throw Error("need one displayed class per assembled example");
  }
  LabelPositionIndex index;
  index.positions.reserve(displayed.size());
  index.expected.reserve(displayed.size());
  for (std::size_t i = 0; i < assembled.segments.size(); ++i) {
    const auto& seg = assembled.segments[i];
    const std::string_view prefix(assembled.text.data(), seg.cue_end);
    const TokenIds prefix_tokens = tokenizer.tokenize(prefix);
    if (!is_prefix(prefix_tokens, full_tokens)) {
      throw MisalignmentError(
          i, "example " + std::to_string(i) +
                 ": tokens of the text up to the label cue are not a prefix of "
                 "the full tokenization");
    }
    const std::size_t pos = prefix_tokens.size();
    if (displayed[i] >= map.num_classes()) {
      throw MisalignmentError(i, "example " + std::to_string(i) +
                                     ": displayed class out of range");
    }
    const TokenId expected = map[displayed[i]].first;
    if (pos >= full_tokens.size() || full_tokens[pos] != expected) {
      throw MisalignmentError(
          i, "example " + std::to_string(i) + ": expected label token " +
                 std::to_string(expected) + " at position " +
                 std::to_string(pos) + ", found " +
                 (pos < full_tokens.size() ? std::to_string(full_tokens[pos])
                                           : std::string("end of input")));
    }
    if (!index.positions.empty() && pos <= index.positions.back()) {
      throw MisalignmentError(i, "example " + std::to_string(i) +
                                     ": label positions not increasing");
    }
    index.positions.push_back(pos);
    index.expected.push_back(expected);
  }
  return index;
}

}  // namespace icldyn
