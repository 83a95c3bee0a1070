#include "icldyn/backend.hpp"

#include "icldyn/errors.hpp"

namespace icldyn {

void validate_logprob_request(std::span<const TokenId> tokens,
                              std::span<const std::size_t> positions,
                              std::span<const TokenId> token_ids,
                              std::size_t max_input_tokens,
                              std::size_t vocab_size) {
  if (tokens.size() > max_input_tokens) {
    throw TokenLimitError("input of " + std::to_string(tokens.size()) +
                          " tokens exceeds the limit of " +
                          std::to_string(max_input_tokens));
  }
  for (auto pos : positions) {
    if (pos > tokens.size()) {
      throw BackendError("position " + std::to_string(pos) +
                             " is past the end of a " +
                             std::to_string(tokens.size()) + "-token input",
                         false);
    }
  }
  if (vocab_size == 0) return;
  for (auto id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw BackendError("token id " + std::to_string(id) +
                             " is outside the vocabulary",
                         false);
    }
  }
}

}  // namespace icldyn
