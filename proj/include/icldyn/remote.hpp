#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "icldyn/backend.hpp"

namespace icldyn {

/// Connection settings for a server speaking the JSON logprobs protocol.
struct RemoteConfig {
  /// Base URL, e.g. "http://127.0.0.1:8080".
  std::string url = "http://127.0.0.1:8080";
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  /// Extra attempts after a retryable failure.
  std::size_t retries = 3;
  /// First backoff delay; doubled after every failed attempt.
  std::chrono::milliseconds backoff{200};
  /// Declared limits. When unset they are read from GET /v1/info.
  std::optional<std::size_t> max_input_tokens;
  std::optional<std::size_t> vocab_size;

  /// Overrides fields from ICLDYN_BACKEND_URL, ICLDYN_BACKEND_TIMEOUT
  /// (seconds), ICLDYN_BACKEND_MAX_IN_FLIGHT and ICLDYN_BACKEND_RETRIES.
  /// Throws ConfigError on unparsable values.
  static RemoteConfig with_env_overrides(RemoteConfig base);
};

/// Backend client for POST /v1/tokenize and POST /v1/logprobs.
///
/// Transport failures, 429 and 5xx responses are retried with exponential
/// backoff; a "token_limit" error is raised as TokenLimitError, other 4xx
/// responses as permanent BackendError, and unparsable payloads as
/// ProtocolError. JSON null in a logprobs row decodes to -inf.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

  RemoteBackend(const RemoteBackend&) = delete;
  RemoteBackend& operator=(const RemoteBackend&) = delete;

  const Tokenizer& tokenizer() const override;
  PositionDistributions logprobs(std::span<const TokenId> tokens,
                                 std::span<const std::size_t> positions,
                                 std::span<const TokenId> token_ids) const override;
  std::size_t max_input_tokens() const override;
  std::string describe() const override;

  const RemoteConfig& config() const noexcept;
  /// Number of HTTP requests issued so far, retries included.
  std::size_t requests_sent() const noexcept;

  class Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace icldyn
