#include "icldyn/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "icldyn/errors.hpp"

namespace icldyn {

namespace {

bool is_punct(char c) {
  switch (c) {
    case ':':
    case '\'':
    case '"':
    case '.':
    case ',':
    case ';':
    case '!':
    case '?':
    case '(':
    case ')':
    case '[':
    case ']':
      return true;
    default:
      return false;
  }
}

bool is_break(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; }

/// Length of the word or punctuation unit starting at `i`.
std::size_t unit_length(std::string_view text, std::size_t i) {
  if (is_punct(text[i])) return 1;
  std::size_t j = i;
  while (j < text.size() && !is_break(text[j]) && !is_punct(text[j])) ++j;
  return j - i;
}

}  // namespace

WordTokenizer::WordTokenizer(std::map<std::string, TokenId> pieces,
                             WhitespaceMode mode)
    : pieces_(std::move(pieces)), mode_(mode) {
  TokenId max_id = kUnknown;
  for (const auto& [piece, id] : pieces_) {
    if (piece.empty()) throw Error("tokenizer pieces must be non-empty");
    if (id == kUnknown || id < 0) {
      throw Error("token id 0 is reserved for the unknown token");
    }
    if (!by_id_.emplace(id, piece).second) {
      throw Error("duplicate token id " + std::to_string(id));
    }
    max_id = std::max(max_id, id);
  }
  vocab_size_ = static_cast<std::size_t>(max_id) + 1;
}

WordTokenizer WordTokenizer::fit(std::span<const std::string> corpus,
                                 WhitespaceMode mode) {
  std::set<std::string> seen;
  for (const auto& text : corpus) {
    for (auto& piece : split_pieces(text, mode)) seen.insert(std::move(piece));
    // The same text can also appear mid-input, without the dummy prefix.
    if (mode == WhitespaceMode::dummy_prefix) {
      for (auto& piece : split_pieces(text, WhitespaceMode::merge)) {
        seen.insert(std::move(piece));
      }
    }
  }
  std::map<std::string, TokenId> pieces;
  TokenId next = 1;
  for (const auto& piece : seen) pieces.emplace(piece, next++);
  return WordTokenizer(std::move(pieces), mode);
}

std::vector<std::string> WordTokenizer::split_pieces(std::string_view text,
                                                     WhitespaceMode mode) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ') {
      if (i + 1 < text.size() && !is_break(text[i + 1])) {
        const std::size_t len = unit_length(text, i + 1);
        out.emplace_back(text.substr(i, len + 1));
        i += len + 1;
      } else {
        out.emplace_back(" ");
        ++i;
      }
    } else if (is_break(c)) {
      out.emplace_back(1, c);
      ++i;
    } else {
      const std::size_t len = unit_length(text, i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  if (mode == WhitespaceMode::dummy_prefix && !out.empty() &&
      !is_break(out.front().front())) {
    out.front().insert(out.front().begin(), ' ');
  }
  return out;
}

void WordTokenizer::encode_piece(const std::string& piece,
                                 TokenIds& out) const {
  if (auto it = pieces_.find(piece); it != pieces_.end()) {
    out.push_back(it->second);
    return;
  }
  // Greedy longest-match split into known sub-pieces.
  std::size_t pos = 0;
  while (pos < piece.size()) {
    std::size_t best = 0;
    TokenId best_id = kUnknown;
    for (std::size_t len = piece.size() - pos; len > 0; --len) {
      if (auto it = pieces_.find(piece.substr(pos, len)); it != pieces_.end()) {
        best = len;
        best_id = it->second;
        break;
      }
    }
    if (best == 0) {
      out.push_back(kUnknown);
      return;
    }
    out.push_back(best_id);
    pos += best;
  }
}

TokenIds WordTokenizer::tokenize(std::string_view text) const {
  TokenIds out;
  for (const auto& piece : split_pieces(text, mode_)) encode_piece(piece, out);
  return out;
}

std::string WordTokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    auto it = by_id_.find(id);
    out += it == by_id_.end() ? std::string("<unk>") : it->second;
  }
  if (mode_ == WhitespaceMode::dummy_prefix && !out.empty() &&
      out.front() == ' ') {
    out.erase(out.begin());
  }
  return out;
}

}  // namespace icldyn
