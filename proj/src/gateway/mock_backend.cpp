// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "rco/error.hpp"
#include "rco/gateway.hpp"
#include "rco/hash.hpp"

namespace rco {

namespace {

std::string joined_text(const CompletionRequest& request) {
  std::string all;
  for (const auto& m : request.messages) {
    all += m.text;
    all += '\n';
  }
  return all;
}

// Text between "[The Start of Assistant X's ...]" and "[The End of Assistant X's".
std::optional<std::string> candidate(const std::string& text, char slot) {
  const std::string start = std::string("[The Start of Assistant ") + slot + "'s";
  const std::string stop = std::string("\n[The End of Assistant ") + slot + "'s";
  auto s = text.find(start);
  if (s == std::string::npos) return std::nullopt;
  s = text.find('\n', s);
  if (s == std::string::npos) return std::nullopt;
  ++s;
  const auto e = text.find(stop, s);
  if (e == std::string::npos) return std::nullopt;
  return text.substr(s, e - s);
}

class MockBackend final : public Backend {
 public:
  MockBackend(std::uint64_t seed, MockScript script) : seed_(seed), script_(std::move(script)) {}

  BackendReply send(const CompletionRequest& request, std::string_view model) override {
    if (script_.unreachable)
      return TransportFailure{FailureKind::transient, "mock endpoint unreachable"};
    const std::string text = joined_text(request);
    for (const auto& rule : script_.rules)
      if (text.find(rule.match) != std::string::npos) return rule.reply;

    std::uint64_t h = hash_combine(seed_, model);
    h = hash_combine(h, to_string(request.role));
    h = hash_combine(h, text);
    // Greedy decoding ignores the sampling seed.
    if (request.temperature > 0.0 && request.seed)
      h = hash_combine(h, static_cast<std::uint64_t>(*request.seed));

    if (request.role == Role::judge) {
      if (text.find("\"[[rating]]\"") != std::string::npos) return rating_reply(h);
      if (text.find("[[CONSISTENT]]") != std::string::npos) return consistency_reply(h);
      if (text.find("\"[[A]]\"") != std::string::npos) return verdict_reply(text, h);
      return "Mock judgment " + hex64(h) + ".";
    }
    if (request.role == Role::critic) {
      return "Mock critique " + hex64(h) + ": the response could be clearer.\n"
             "Suggestions for improvement: address point " + hex64(splitmix64(h)).substr(0, 6) +
             ".";
    }
    const bool refining = text.find("Your revision:") != std::string::npos ||
                          text.find("---Your Revision---") != std::string::npos;
    if (refining) return "My revised response: mock refinement " + hex64(h) + ".";
    return "Mock response " + hex64(h) + ".";
  }

 private:
  std::string rating_reply(std::uint64_t h) const {
    const int r = script_.rating.value_or(static_cast<int>(1 + splitmix64(h) % 10));
    return "The response is adequate.\nRating: [[" + std::to_string(r) + "]]";
  }

  std::string consistency_reply(std::uint64_t h) const {
    const bool ok = script_.consistent_answers.value_or(splitmix64(h) % 2 == 0);
    return ok ? "The final answers agree. [[CONSISTENT]]" : "The answers differ. [[INCONSISTENT]]";
  }

  std::string verdict_reply(const std::string& text, std::uint64_t h) const {
    switch (script_.verdicts) {
      case MockVerdictPolicy::always_a: return "Assistant A is better. [[A]]";
      case MockVerdictPolicy::always_b: return "Assistant B is better. [[B]]";
      case MockVerdictPolicy::tie: return "Both are equally good. [[C]]";
      case MockVerdictPolicy::garbage: return "I cannot decide " + hex64(h) + ".";
      case MockVerdictPolicy::consistent: break;
    }
    const auto a = candidate(text, 'A');
    const auto b = candidate(text, 'B');
    if (!a || !b) return "Both are equally good. [[C]]";
    const std::uint64_t sa = hash_combine(seed_, *a);
    const std::uint64_t sb = hash_combine(seed_, *b);
    if (*a == *b || sa == sb) return "Both are equally good. [[C]]";
    return sa > sb ? "Assistant A is better. [[A]]" : "Assistant B is better. [[B]]";
  }

  std::uint64_t seed_;
  MockScript script_;
};

}  // namespace

MockScript parse_mock_behavior(std::string_view text) {
  MockScript script;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string item(text.substr(pos, comma - pos));
    pos = comma + 1;
    if (item.empty() || item == "generate" || item == "consistent" || item == "flip-with-order") {
      if (item == "consistent" || item == "flip-with-order")
        script.verdicts = MockVerdictPolicy::consistent;
    } else if (item == "always-A") {
      script.verdicts = MockVerdictPolicy::always_a;
    } else if (item == "always-B") {
      script.verdicts = MockVerdictPolicy::always_b;
    } else if (item == "tie") {
      script.verdicts = MockVerdictPolicy::tie;
    } else if (item == "garbage") {
      script.verdicts = MockVerdictPolicy::garbage;
    } else if (item == "unreachable") {
      script.unreachable = true;
    } else if (item.rfind("rating=", 0) == 0) {
      int r = 0;
      try {
        r = std::stoi(item.substr(7));
      } catch (const std::exception&) {
        throw ConfigError("mock behavior '" + item + "': rating must be an integer");
      }
      script.rating = r;
    } else if (item == "answers=consistent") {
      script.consistent_answers = true;
    } else if (item == "answers=inconsistent") {
      script.consistent_answers = false;
    } else {
      throw ConfigError("unknown mock behavior '" + item + "'");
    }
  }
  return script;
}

std::shared_ptr<Backend> make_mock_backend(std::uint64_t seed, MockScript script) {
  return std::make_shared<MockBackend>(seed, std::move(script));
}

Endpoint make_mock_endpoint(std::uint64_t seed, MockScript script, std::string id) {
  Endpoint ep;
  ep.id = std::move(id);
  ep.model = "mock";
  ep.backend = make_mock_backend(seed, std::move(script));
  ep.retry.sleep = [](std::chrono::milliseconds) {};
  return ep;
}

}  // namespace rco
