#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icldyn {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

/// Text to token ids. Implementations must be pure: identical text gives
/// identical ids, and calls may happen concurrently.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenIds tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

/// How a word at the very start of the text is encoded.
enum class WhitespaceMode {
  /// Leading-space words and bare words are distinct tokens, and a lone
  /// trailing space becomes its own token (Falcon-like).
  merge,
  /// A bare word at the start of text gets an implicit leading space, so
  /// "positive" and " positive" share a token (LLaMa-like).
  dummy_prefix,
};

/// Closed-vocabulary reference tokenizer.
///
/// Text is pre-split into pieces: newlines, single punctuation characters
/// and words (maximal runs of other non-space characters). One space
/// directly before a word or punctuation character is folded into that
/// piece; any other space is a piece of its own. A piece missing from the
/// vocabulary is split greedily into the longest known sub-pieces, and maps
/// to the unknown token if that fails.
class WordTokenizer final : public Tokenizer {
 public:
  static constexpr TokenId kUnknown = 0;

  /// `pieces` maps piece text to id; id 0 is reserved for the unknown token.
  WordTokenizer(std::map<std::string, TokenId> pieces, WhitespaceMode mode);

  /// Builds a vocabulary containing every piece of `corpus` (in dummy_prefix
  /// mode also the pieces of each text without the prefix), with ids
  /// assigned in sorted piece order starting at 1.
  static WordTokenizer fit(std::span<const std::string> corpus,
                           WhitespaceMode mode);

  TokenIds tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return vocab_size_; }

  WhitespaceMode mode() const noexcept { return mode_; }
  const std::map<std::string, TokenId>& pieces() const noexcept {
    return pieces_;
  }

  /// The pre-tokenization step, exposed for tests and vocabulary building.
  static std::vector<std::string> split_pieces(std::string_view text,
                                               WhitespaceMode mode);

 private:
  void encode_piece(const std::string& piece, TokenIds& out) const;

  std::map<std::string, TokenId> pieces_;
  std::unordered_map<TokenId, std::string> by_id_;
  WhitespaceMode mode_;
  std::size_t vocab_size_ = 1;
};

}  // namespace icldyn
