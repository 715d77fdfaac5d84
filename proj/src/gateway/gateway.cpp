// SPDX-License-Identifier: Apache-2.0
#include "rco/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "rco/error.hpp"

namespace rco {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::actor: return "actor";
    case Role::critic: return "critic";
    case Role::judge: return "judge";
  }
  return "actor";
}

std::string_view to_string(Speaker s) { return s == Speaker::system ? "system" : "user"; }

void validate(const CompletionRequest& request) {
  if (request.messages.empty()) throw ValidationError("completion request has no messages");
  if (request.max_tokens < 1) throw ValidationError("completion request max_tokens < 1");
  if (request.temperature < 0.0) throw ValidationError("completion request temperature < 0");
}

CompletionResult complete(const Endpoint& endpoint, const CompletionRequest& request) {
  using clock = std::chrono::steady_clock;
  CompletionResult result;
  result.endpoint_id = endpoint.id;
  const auto start = clock::now();
  auto finish = [&](CompletionResult& r) -> CompletionResult {
    r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start);
    return r;
  };

  try {
    validate(request);
  } catch (const ValidationError& e) {
    result.error = GatewayError{GatewayErrorKind::endpoint, e.what()};
    return finish(result);
  }
  if (!endpoint.backend) {
    result.error = GatewayError{GatewayErrorKind::endpoint, "endpoint has no backend"};
    return finish(result);
  }

  const int max_attempts = std::max(1, endpoint.retry.max_attempts);
  auto backoff = endpoint.retry.initial_backoff;
  std::string last_message;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    result.attempt = attempt;
    BackendReply reply = endpoint.backend->send(request, endpoint.model);
    if (auto* text = std::get_if<std::string>(&reply)) {
      result.text = std::move(*text);
      return finish(result);
    }
    const auto& failure = std::get<TransportFailure>(reply);
    last_message = failure.message;
    if (failure.kind == FailureKind::protocol) {
      result.error = GatewayError{GatewayErrorKind::protocol, failure.message};
      return finish(result);
    }
    if (failure.kind == FailureKind::fatal) break;
    if (attempt < max_attempts) {
      if (endpoint.retry.sleep)
        endpoint.retry.sleep(backoff);
      else
        std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * endpoint.retry.multiplier));
    }
  }
  result.error = GatewayError{GatewayErrorKind::endpoint,
                              "endpoint '" + endpoint.id + "' failed after " +
                                  std::to_string(result.attempt) + " attempt(s): " + last_message};
  return finish(result);
}

void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<CompletionResult> batch_complete(const Endpoint& endpoint,
                                             std::span<const CompletionRequest> requests,
                                             int parallelism) {
  if (parallelism < 1) throw ValidationError("parallelism must be at least 1");
  std::vector<CompletionResult> results(requests.size());
  parallel_for(requests.size(), parallelism,
               [&](std::size_t i) { results[i] = complete(endpoint, requests[i]); });
  return results;
}

}  // namespace rco
