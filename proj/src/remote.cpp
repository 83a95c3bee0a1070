#include "icldyn/remote.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "icldyn/errors.hpp"

namespace icldyn {

using nlohmann::json;

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::size_t parse_count(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid ") + what + ": '" + text + "'");
  }
}

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("backend URL needs a scheme: '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

[[noreturn]] void raise_http_error(int status, const std::string& body) {
  std::string code;
  std::string message = body;
  try {
    const json j = json::parse(body);
    const json& e = j.at("error");
    code = e.value("code", "");
    message = e.value("message", message);
  } catch (const std::exception&) {
  }
  const std::string what = "backend returned HTTP " + std::to_string(status) +
                           (code.empty() ? "" : " (" + code + ")") + ": " + message;
  if (code == "token_limit" || status == 413) throw TokenLimitError(what);
  if (status == 429 || status >= 500) throw BackendError(what, true);
  throw BackendError(what, false);
}

class RemoteTokenizer final : public Tokenizer {
 public:
  explicit RemoteTokenizer(const RemoteBackend::Impl& owner) : owner_(owner) {}

  TokenIds tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override;

 private:
  const RemoteBackend::Impl& owner_;
};

}  // namespace

class RemoteBackend::Impl {
 public:
  explicit Impl(RemoteConfig cfg)
      : config(std::move(cfg)),
        url(split_url(config.url)),
        slots(static_cast<std::ptrdiff_t>(config.max_in_flight)),
        tokenizer(*this) {}

  json post(const std::string& path, const json& body) const {
    return request(path, &body);
  }
  json get(const std::string& path) const { return request(path, nullptr); }

  RemoteConfig config;
  SplitUrl url;
  mutable std::counting_semaphore<> slots;
  mutable std::atomic<std::size_t> sent{0};
  RemoteTokenizer tokenizer;
  std::size_t max_input_tokens = 0;
  std::size_t vocab_size = 0;

 private:
  json request(const std::string& path, const json* body) const {
    const std::string payload = body != nullptr ? body->dump() : std::string();
    auto delay = config.backoff;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        return attempt_once(path, body != nullptr ? &payload : nullptr);
      } catch (const BackendError& e) {
        if (!e.retryable() || attempt >= config.retries) throw;
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }

  json attempt_once(const std::string& path, const std::string* payload) const {
    slots.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots};

    httplib::Client client(url.origin);
    client.set_connection_timeout(config.timeout);
    client.set_read_timeout(config.timeout);
    client.set_write_timeout(config.timeout);
    ++sent;
    const std::string target = url.prefix + path;
    auto res = payload != nullptr
                   ? client.Post(target, *payload, "application/json")
                   : client.Get(target);
    if (!res) {
      throw BackendError("request to " + config.url + target +
                             " failed: " + httplib::to_string(res.error()),
                         true);
    }
    if (res->status != 200) raise_http_error(res->status, res->body);
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
  }
};

namespace {

TokenIds RemoteTokenizer::tokenize(std::string_view text) const {
  const json res = owner_.post("/v1/tokenize", json{{"text", std::string(text)}});
  try {
    return res.at("tokens").get<TokenIds>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed tokenize response: ") + e.what());
  }
}

std::string RemoteTokenizer::detokenize(std::span<const TokenId> ids) const {
  const json res = owner_.post(
      "/v1/detokenize", json{{"tokens", TokenIds(ids.begin(), ids.end())}});
  try {
    return res.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed detokenize response: ") + e.what());
  }
}

std::size_t RemoteTokenizer::vocab_size() const { return owner_.vocab_size; }

}  // namespace

RemoteConfig RemoteConfig::with_env_overrides(RemoteConfig base) {
  if (auto v = env("ICLDYN_BACKEND_URL")) base.url = *v;
  if (auto v = env("ICLDYN_BACKEND_TIMEOUT")) {
    try {
      std::size_t used = 0;
      const double seconds = std::stod(*v, &used);
      if (used != v->size() || !(seconds > 0.0)) throw std::invalid_argument(*v);
      base.timeout = std::chrono::milliseconds(
          static_cast<std::int64_t>(std::llround(seconds * 1000.0)));
    } catch (const std::exception&) {
      throw ConfigError("invalid ICLDYN_BACKEND_TIMEOUT: '" + *v + "'");
    }
  }
  if (auto v = env("ICLDYN_BACKEND_MAX_IN_FLIGHT")) {
    base.max_in_flight = parse_count(*v, "ICLDYN_BACKEND_MAX_IN_FLIGHT");
  }
  if (auto v = env("ICLDYN_BACKEND_RETRIES")) {
    base.retries = parse_count(*v, "ICLDYN_BACKEND_RETRIES");
  }
  return base;
}

RemoteBackend::RemoteBackend(RemoteConfig config) {
  if (config.max_in_flight < 1) {
    throw ConfigError("max in-flight requests must be at least 1");
  }
  impl_ = std::make_unique<Impl>(std::move(config));
  const RemoteConfig& cfg = impl_->config;
  if (cfg.max_input_tokens && cfg.vocab_size) {
    impl_->max_input_tokens = *cfg.max_input_tokens;
    impl_->vocab_size = *cfg.vocab_size;
    return;
  }
  const json info = impl_->get("/v1/info");
  try {
    impl_->max_input_tokens = cfg.max_input_tokens
                                  ? *cfg.max_input_tokens
                                  : info.at("max_input_tokens").get<std::size_t>();
    impl_->vocab_size =
        cfg.vocab_size ? *cfg.vocab_size : info.at("vocab_size").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed info response: ") + e.what());
  }
}

RemoteBackend::~RemoteBackend() = default;

const Tokenizer& RemoteBackend::tokenizer() const { return impl_->tokenizer; }

PositionDistributions RemoteBackend::logprobs(
    std::span<const TokenId> tokens, std::span<const std::size_t> positions,
    std::span<const TokenId> token_ids) const {
  validate_logprob_request(tokens, positions, token_ids, impl_->max_input_tokens,
                           impl_->vocab_size);
  const json body{
      {"tokens", TokenIds(tokens.begin(), tokens.end())},
      {"positions", std::vector<std::size_t>(positions.begin(), positions.end())},
      {"token_ids", TokenIds(token_ids.begin(), token_ids.end())}};
  const json res = impl_->post("/v1/logprobs", body);

  PositionDistributions out(positions.size(), token_ids.size());
  const auto it = res.find("logprobs");
  if (it == res.end() || !it->is_array() || it->size() != positions.size()) {
    throw ProtocolError("logprobs response needs one row per position");
  }
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const json& row = (*it)[r];
    if (!row.is_array() || row.size() != token_ids.size()) {
      throw ProtocolError("logprobs row " + std::to_string(r) +
                          " needs one entry per token id");
    }
    for (std::size_t c = 0; c < token_ids.size(); ++c) {
      const json& v = row[c];
      if (v.is_null()) {
        out.at(r, c) = -std::numeric_limits<double>::infinity();
      } else if (v.is_number()) {
        const double x = v.get<double>();
        if (!(x <= 0.0)) {
          throw ProtocolError("log-probability above 0 in row " + std::to_string(r));
        }
        out.at(r, c) = x;
      } else {
        throw ProtocolError("non-numeric log-probability in row " +
                            std::to_string(r));
      }
    }
  }
  return out;
}

std::size_t RemoteBackend::max_input_tokens() const {
  return impl_->max_input_tokens;
}

std::string RemoteBackend::describe() const { return "remote:" + impl_->config.url; }

const RemoteConfig& RemoteBackend::config() const noexcept { return impl_->config; }

std::size_t RemoteBackend::requests_sent() const noexcept { return impl_->sent; }

}  // namespace icldyn
