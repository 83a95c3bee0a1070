#include "icldyn/server.hpp"

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "icldyn/errors.hpp"

namespace icldyn {

using nlohmann::json;

namespace {

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                  "application/json");
}

template <typename Fn>
httplib::Server::Handler json_handler(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      json body = req.body.empty() ? json::object() : json::parse(req.body);
      res.set_content(fn(body).dump(), "application/json");
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const TokenLimitError& e) {
      send_error(res, 413, "token_limit", e.what());
    } catch (const BackendError& e) {
      send_error(res, e.retryable() ? 503 : 400,
                 e.retryable() ? "unavailable" : "invalid_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

class BackendServer::Impl {
 public:
  Impl(std::shared_ptr<const Backend> b, ServerOptions o)
      : backend(std::move(b)), options(std::move(o)) {
    if (!backend) throw Error("server needs a backend");
    const Backend& be = *backend;
    // stop() waits for idle keep-alive connections to time out.
    server.set_keep_alive_timeout(1);
    server.Post("/v1/tokenize", json_handler([&be](const json& body) {
                  return json{{"tokens", be.tokenizer().tokenize(
                                             body.at("text").get<std::string>())}};
                }));
    server.Post("/v1/detokenize", json_handler([&be](const json& body) {
                  const auto ids = body.at("tokens").get<TokenIds>();
                  return json{{"text", be.tokenizer().detokenize(ids)}};
                }));
    server.Post("/v1/logprobs", json_handler([&be](const json& body) {
                  const auto tokens = body.at("tokens").get<TokenIds>();
                  const auto positions =
                      body.at("positions").get<std::vector<std::size_t>>();
                  const auto ids = body.at("token_ids").get<TokenIds>();
                  const PositionDistributions d = be.logprobs(tokens, positions, ids);
                  json rows = json::array();
                  for (std::size_t r = 0; r < d.rows(); ++r) {
                    json row = json::array();
                    // nlohmann writes non-finite numbers as null.
                    for (double v : d.row(r)) row.push_back(v);
                    rows.push_back(std::move(row));
                  }
                  return json{{"logprobs", std::move(rows)}};
                }));
    server.Get("/v1/info", json_handler([&be](const json&) {
                 return json{{"name", be.describe()},
                             {"vocab_size", be.vocab_size()},
                             {"max_input_tokens", be.max_input_tokens()}};
               }));
  }

  void bind() {
    if (bound_port > 0) return;
    bound_port = options.port == 0 ? server.bind_to_any_port(options.host)
                                   : (server.bind_to_port(options.host, options.port)
                                          ? options.port
                                          : -1);
    if (bound_port <= 0) {
      throw Error("cannot bind " + options.host + ":" + std::to_string(options.port));
    }
  }

  std::shared_ptr<const Backend> backend;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> bound_port{0};
};

BackendServer::BackendServer(std::shared_ptr<const Backend> backend,
                             ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(backend), std::move(options))) {}

BackendServer::~BackendServer() { stop(); }

void BackendServer::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void BackendServer::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void BackendServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int BackendServer::port() const noexcept { return impl_->bound_port; }

std::string BackendServer::url() const {
  return "http://" + impl_->options.host + ":" + std::to_string(impl_->bound_port);
}

}  // namespace icldyn
