// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "json.hpp"
#include "rco/error.hpp"
#include "rco/gateway.hpp"

namespace rco {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("malformed endpoint URL '" + url + "'");
  ParsedUrl out;
  out.scheme_host_port = m[1].str();
  out.path = m[2].matched && m[2].str() != "/" ? m[2].str() : "/v1/chat/completions";
  return out;
}

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpEndpointConfig config) : config_(std::move(config)) {
    url_ = split_url(config_.url);
  }

  BackendReply send(const CompletionRequest& request, std::string_view model) override {
    // httplib::Client is not thread-safe; one client per call keeps the
    // backend shareable.
    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
    const std::string body = build_chat_request_body(request, model);
    auto res = client.Post(url_.path, headers, body, "application/json");
    if (!res)
      return TransportFailure{FailureKind::transient,
                              "HTTP request failed: " + httplib::to_string(res.error())};
    if (res->status == 200) return parse_chat_response_body(res->body);
    const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
    return TransportFailure{transient ? FailureKind::transient : FailureKind::fatal,
                            "HTTP status " + std::to_string(res->status)};
  }

 private:
  HttpEndpointConfig config_;
  ParsedUrl url_;
};

}  // namespace

std::string build_chat_request_body(const CompletionRequest& request, std::string_view model) {
  nlohmann::ordered_json body;
  body["model"] = std::string(model);
  auto messages = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    nlohmann::ordered_json msg;
    msg["role"] = std::string(to_string(m.speaker));
    msg["content"] = m.text;
    messages.push_back(std::move(msg));
  }
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;
  return body.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

BackendReply parse_chat_response_body(std::string_view body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return TransportFailure{FailureKind::protocol, std::string("reply is not JSON: ") + e.what()};
  }
  const auto* choices = doc.is_object() && doc.contains("choices") ? &doc["choices"] : nullptr;
  if (!choices || !choices->is_array() || choices->empty())
    return TransportFailure{FailureKind::protocol, "reply has no choices"};
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object())
    return TransportFailure{FailureKind::protocol, "reply choice has no message"};
  const auto& message = first["message"];
  if (!message.contains("content") || !message["content"].is_string())
    return TransportFailure{FailureKind::protocol, "reply message has no content field"};
  return message["content"].get<std::string>();
}

std::shared_ptr<Backend> make_http_backend(HttpEndpointConfig config) {
  return std::make_shared<HttpBackend>(std::move(config));
}

Endpoint endpoint_from_environment(Role role, const std::string& model, RetryPolicy retry,
                                   std::uint64_t default_mock_seed) {
  std::string prefix = "RCO_";
  for (char c : to_string(role)) prefix += static_cast<char>(std::toupper(c));
  const char* url = std::getenv((prefix + "_URL").c_str());
  if (!url || !*url) throw ConfigError(prefix + "_URL is not set");
  const char* token = std::getenv((prefix + "_TOKEN").c_str());

  Endpoint ep;
  ep.model = model;
  ep.retry = std::move(retry);
  const std::string u(url);
  if (u.rfind("mock://", 0) == 0) {
    std::string behavior = u.substr(7);
    std::uint64_t seed = default_mock_seed;
    if (auto q = behavior.find("?seed="); q != std::string::npos) {
      try {
        seed = std::stoull(behavior.substr(q + 6));
      } catch (const std::exception&) {
        throw ConfigError("malformed mock seed in '" + u + "'");
      }
      behavior = behavior.substr(0, q);
    }
    ep.backend = make_mock_backend(seed, parse_mock_behavior(behavior));
    ep.id = u;
    return ep;
  }
  HttpEndpointConfig cfg;
  cfg.url = u;
  cfg.token = token ? token : "";
  if (const char* t = std::getenv("RCO_TIMEOUT_SECONDS"); t && *t) {
    try {
      cfg.timeout = std::chrono::seconds(std::stoll(t));
    } catch (const std::exception&) {
      throw ConfigError("RCO_TIMEOUT_SECONDS must be an integer");
    }
  }
  ep.backend = make_http_backend(cfg);
  ep.id = u;
  return ep;
}

}  // namespace rco
