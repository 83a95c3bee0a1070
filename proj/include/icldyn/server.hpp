#pragma once

#include <memory>
#include <string>

#include "icldyn/backend.hpp"

namespace icldyn {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 0;
};

/// Serves a Backend over the JSON protocol:
///   POST /v1/tokenize   {"text"}                            -> {"tokens"}
///   POST /v1/detokenize {"tokens"}                          -> {"text"}
///   POST /v1/logprobs   {"tokens","positions","token_ids"}  -> {"logprobs"}
///   GET  /v1/info       -> {"name","vocab_size","max_input_tokens"}
/// Errors are {"error":{"code","message"}}; an over-long input is 413 with
/// code "token_limit", other invalid requests are 400. -inf is sent as null.
class BackendServer {
 public:
  BackendServer(std::shared_ptr<const Backend> backend, ServerOptions options = {});
  ~BackendServer();

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  /// Binds and starts serving on a background thread.
  void start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

  int port() const noexcept;
  std::string url() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace icldyn
