// SPDX-License-Identifier: Apache-2.0
//
// Uniform access to actor, critic and judge endpoints. A Backend performs one
// transport attempt; complete() layers retries with exponential backoff on top
// and batch_complete() fans requests out under a concurrency bound.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rco {

enum class Role { actor, critic, judge };
std::string_view to_string(Role r);

enum class Speaker { system, user };
std::string_view to_string(Speaker s);

struct Message {
  Speaker speaker = Speaker::user;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct CompletionRequest {
  Role role = Role::actor;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
};

/// Throws ValidationError when messages are empty or max_tokens/temperature
/// are out of range.
void validate(const CompletionRequest& request);

enum class FailureKind {
  transient,  // worth retrying (timeouts, 429, 5xx, connection refused)
  fatal,      // not worth retrying (auth, 4xx)
  protocol,   // reply arrived but is malformed
};

struct TransportFailure {
  FailureKind kind = FailureKind::transient;
  std::string message;
};

using BackendReply = std::variant<std::string, TransportFailure>;

/// One transport attempt. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply send(const CompletionRequest& request, std::string_view model) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  // Injected so tests do not sleep; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Endpoint descriptor: a shareable, internally synchronized handle.
struct Endpoint {
  std::string id;
  std::string model;
  std::shared_ptr<Backend> backend;
  RetryPolicy retry;
};

enum class GatewayErrorKind { endpoint, protocol };

struct GatewayError {
  GatewayErrorKind kind = GatewayErrorKind::endpoint;
  std::string message;
};

struct CompletionResult {
  std::string text;  // empty when error is set
  std::string endpoint_id;
  std::chrono::milliseconds latency{0};
  int attempt = 0;
  std::optional<GatewayError> error;

  bool ok() const noexcept { return !error.has_value(); }
};

/// Sends `request`, retrying transient failures up to the endpoint's limit.
/// Never throws for transport problems; they are reported in `error`.
CompletionResult complete(const Endpoint& endpoint, const CompletionRequest& request);

/// Results are aligned index-for-index with `requests`; at most `parallelism`
/// requests are in flight at once. A terminal failure only fills its own slot.
std::vector<CompletionResult> batch_complete(const Endpoint& endpoint,
                                             std::span<const CompletionRequest> requests,
                                             int parallelism);

/// Runs fn(0..n-1) on up to `parallelism` threads. The first exception thrown by
/// fn is rethrown after all workers finish.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// mock backend

enum class MockVerdictPolicy {
  consistent,  // winner depends on candidate content only, so the letter flips with order
  always_a,
  always_b,
  tie,
  garbage,  // no bracketed verdict at all
};

/// Scripted reply: the first rule whose `match` occurs in the request text wins.
struct MockRule {
  std::string match;
  std::string reply;
};

struct MockScript {
  MockVerdictPolicy verdicts = MockVerdictPolicy::consistent;
  std::optional<int> rating;  // fixed judge rating; otherwise derived from content
  std::optional<bool> consistent_answers;  // fixed answer-consistency verdict
  bool unreachable = false;  // every call fails transiently
  std::vector<MockRule> rules;
};

/// Parses a behavior string: "generate", "consistent" (alias "flip-with-order"),
/// "always-A", "always-B", "tie", "garbage", "unreachable", "rating=<k>",
/// "answers=consistent|inconsistent". Several may be joined with ','.
MockScript parse_mock_behavior(std::string_view text);

/// A backend whose reply is a pure function of (seed, request, script).
std::shared_ptr<Backend> make_mock_backend(std::uint64_t seed, MockScript script);

/// Convenience: endpoint wrapping a mock backend with no retry sleeping.
Endpoint make_mock_endpoint(std::uint64_t seed, MockScript script, std::string id = "mock");

// ---------------------------------------------------------------------------
// chat-completion wire client

struct HttpEndpointConfig {
  std::string url;  // scheme://host[:port][/path]; path defaults to /v1/chat/completions
  std::string token;
  std::chrono::seconds timeout{120};
};

/// {model, messages: [{role, content}], temperature, max_tokens, seed?}
std::string build_chat_request_body(const CompletionRequest& request, std::string_view model);

/// Extracts choices[0].message.content; protocol failure otherwise.
BackendReply parse_chat_response_body(std::string_view body);

std::shared_ptr<Backend> make_http_backend(HttpEndpointConfig config);

/// Builds an endpoint for `role` from RCO_<ROLE>_URL / RCO_<ROLE>_TOKEN and
/// RCO_TIMEOUT_SECONDS. A `mock://<behavior>[?seed=<n>]` URL selects the mock
/// backend. Throws ConfigError when the URL is unset or malformed.
Endpoint endpoint_from_environment(Role role, const std::string& model, RetryPolicy retry,
                                   std::uint64_t default_mock_seed);

}  // namespace rco
