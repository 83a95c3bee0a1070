#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "icldyn/tokenizer.hpp"

namespace icldyn {

/// Natural-log probabilities at requested positions. Row i belongs to
/// positions[i], column j to token_ids[j]. A zero probability is -inf.
class PositionDistributions {
 public:
  PositionDistributions() = default;
  PositionDistributions(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& at(std::size_t r, std::size_t c) { return values_.at(r * cols_ + c); }
  double at(std::size_t r, std::size_t c) const {
    return values_.at(r * cols_ + c);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(values_).subspan(r * cols_, cols_);
  }

  bool operator==(const PositionDistributions&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Model access. `logprobs` returns log p(X_l = t | X_<l) under the full
/// vocabulary softmax for every requested (position l, token t), with
/// 0 <= l <= |tokens| (l == |tokens| scores the next token after the input).
///
/// Implementations must be prefix-pure (the row for l depends only on
/// tokens[0, l)) and return identical values for identical requests.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  virtual PositionDistributions logprobs(
      std::span<const TokenId> tokens, std::span<const std::size_t> positions,
      std::span<const TokenId> token_ids) const = 0;
  virtual std::size_t max_input_tokens() const = 0;
  virtual std::string describe() const = 0;

  std::size_t vocab_size() const { return tokenizer().vocab_size(); }
};

/// Shared request validation: throws TokenLimitError when the input exceeds
/// `max_input_tokens` and a permanent BackendError for positions past the
/// end of the input or token ids outside the vocabulary (vocab_size 0 skips
/// the id check).
void validate_logprob_request(std::span<const TokenId> tokens,
                              std::span<const std::size_t> positions,
                              std::span<const TokenId> token_ids,
                              std::size_t max_input_tokens,
                              std::size_t vocab_size);

}  // namespace icldyn
