#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "icldyn/tokenizer.hpp"
#include "icldyn/verbalize.hpp"

namespace icldyn {

/// How one class name is encoded when it follows the label cue in context.
struct LabelTokens {
  std::string name;
  /// First token of the label as it appears after "cue ".
  TokenId first = 0;
  /// All label tokens in context; `first` is the head.
  TokenIds in_context;
  /// The name tokenized on its own, without the preceding space. Diagnostic
  /// only: this is the encoding that must not be scored.
  TokenIds naked;
};

/// Class index -> first label token resolved in context.
class LabelTokenMap {
 public:
  LabelTokenMap() = default;
  explicit LabelTokenMap(std::vector<LabelTokens> labels);

  std::size_t num_classes() const noexcept { return labels_.size(); }
  const LabelTokens& operator[](std::size_t c) const { return labels_.at(c); }
  const std::vector<LabelTokens>& labels() const noexcept { return labels_; }

  /// First tokens in class order; the column order of logprob requests.
  TokenIds first_tokens() const;
  /// Class whose first token is `id`, or num_classes() if none.
  std::size_t class_of(TokenId id) const;

 private:
  std::vector<LabelTokens> labels_;
};

/// Resolves t_c = tokenize(cue + " " + name_c)[P] with P = |tokenize(cue)|.
/// Throws AlignmentError when tokenize(cue) is not a prefix of the longer
/// encoding, and UniquenessError when two classes share a first token.
LabelTokenMap resolve_label_tokens(const Tokenizer& tokenizer,
                                   const TemplateSpec& tmpl,
                                   std::span<const std::string> class_names);

/// Token positions l_1..l_N of each example's first label token.
struct LabelPositionIndex {
  std::vector<std::size_t> positions;
  TokenIds expected;
};

/// l_i is the token length of the text up to and including example i's
/// label cue. Each prefix tokenization must be a prefix of `full_tokens`
/// and the token at l_i must be the assigned label's first token, or a
/// MisalignmentError naming the example is raised.
LabelPositionIndex index_label_positions(std::span<const TokenId> full_tokens,
                                         const AssembledInput& assembled,
                                         const Tokenizer& tokenizer,
                                         const LabelTokenMap& map,
                                         std::span<const std::size_t> displayed);

}  // namespace icldyn
