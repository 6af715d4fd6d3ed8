#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "promptforge/lm.hpp"

using namespace promptforge;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "promptforge_tests";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

LmRequest request(std::string prompt, std::uint64_t seed = 0) {
  LmRequest r;
  r.model_id = "m";
  r.prompt = std::move(prompt);
  r.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("truncation applies stop sequences before the token cap") {
  LmRequest r = request("p");
  CHECK(truncate_completion("Paris\n\nQuestion: next", r) == "Paris");
  CHECK(truncate_completion("one\n---two", r) == "one");
  r.max_tokens = 3;
  CHECK(truncate_completion("a b c d e", r) == "a b c");
  r.stop_sequences.clear();
  CHECK(truncate_completion("x\n\ny", r) == "x\n\ny");
}

TEST_CASE("request validation rejects out-of-range fields") {
  LmRequest r = request("p");
  r.temperature = -0.1;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = request("p");
  r.top_p = 1.5;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = request("p");
  r.max_tokens = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("scripted LM applies rules in order and logs calls") {
  ScriptedLm lm("fallback");
  lm.on_substring("capital", "Paris").on([](const LmRequest& r) -> std::optional<std::string> {
    if (r.seed == 7) return "seven";
    return std::nullopt;
  });
  CHECK(complete(lm, request("the capital of France")) == "Paris");
  CHECK(complete(lm, request("anything", 7)) == "seven");
  CHECK(complete(lm, request("anything")) == "fallback");
  CHECK(lm.call_count() == 3);
  CHECK(lm.call_log()[1].seed == 7);
  lm.clear_log();
  CHECK(lm.call_count() == 0);
}

TEST_CASE("cache keys depend on every identifying field") {
  const auto base = cache_key(request("p", 1));
  CHECK(base.size() == 64);
  CHECK(cache_key(request("p", 1)) == base);
  CHECK(cache_key(request("p", 2)) != base);
  CHECK(cache_key(request("q", 1)) != base);
  auto r = request("p", 1);
  r.temperature = 0.0;
  CHECK(cache_key(r) != base);
}

TEST_CASE("cache store persists, replays and evicts corrupted lines") {
  const auto path = temp_path("cache.jsonl");
  {
    CacheStore store(path);
    store.insert(request("p1"), "r1");
    store.insert(request("p2"), "r2");
    CHECK(store.size() == 2);
  }
  {
    std::ofstream(path, std::ios::app) << "{not json}\n";
    // A tampered response fails the integrity check.
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    auto j = nlohmann::ordered_json::parse(first);
    j["response"] = "tampered";
    std::ofstream(path, std::ios::app) << j.dump() << "\n";
  }
  CacheStore reloaded(path);
  CHECK(reloaded.size() == 2);
  CHECK(reloaded.evicted() == 2);
  CHECK(reloaded.lookup(cache_key(request("p1"))) == std::optional<std::string>("r1"));

  auto inner = std::make_shared<ScriptedLm>("fresh");
  CachedLm cached(inner, std::make_shared<CacheStore>(path));
  CHECK(complete(cached, request("p2")) == "r2");
  CHECK(complete(cached, request("p3")) == "fresh");
  CHECK(complete(cached, request("p3")) == "fresh");
  CHECK(inner->call_count() == 1);
  CHECK(cached.hits() == 2);
  CHECK(cached.misses() == 1);
}

TEST_CASE("call budget stops at the ceiling") {
  auto inner = std::make_shared<ScriptedLm>("ok");
  auto budget = std::make_shared<CallBudget>(2);
  BudgetedLm lm(inner, budget);
  complete(lm, request("a"));
  complete(lm, request("b"));
  CHECK_THROWS_AS(complete(lm, request("c")), BudgetExhausted);
  CHECK(inner->call_count() == 2);
  CHECK(budget->used() == 2);
}

TEST_CASE("http backend retries rate limits and maps errors") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto prompt = body.at("prompt").get<std::string>();
    if (prompt == "flaky" && hits++ == 0) {
      res.status = 429;
      return;
    }
    if (prompt == "broken") {
      res.set_content("not json", "text/plain");
      return;
    }
    if (prompt == "auth") {
      res.set_content(nlohmann::json{{"choices", {{{"text", req.get_header_value("Authorization")}}}}}.dump(),
                      "application/json");
      return;
    }
    res.set_content(nlohmann::json{{"choices", {{{"text", "echo " + prompt}}}}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLmConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.initial_backoff = std::chrono::milliseconds(1);
  cfg.api_key = "secret";
  HttpLm lm(cfg);
  CHECK(complete(lm, request("hello")) == "echo hello");
  CHECK(complete(lm, request("flaky")) == "echo flaky");
  CHECK(hits.load() == 2);
  CHECK(complete(lm, request("auth")) == "Bearer secret");
  try {
    complete(lm, request("broken"));
    FAIL("expected LmError");
  } catch (const LmError& e) {
    CHECK(e.kind() == LmError::Kind::BadResponse);
    CHECK(e.attempts() == 1);
  }
  server.stop();
  th.join();

  HttpLmConfig dead = cfg;
  dead.base_url = "http://127.0.0.1:1";
  dead.max_retries = 1;
  try {
    HttpLm(dead).generate(request("x"));
    FAIL("expected LmError");
  } catch (const LmError& e) {
    CHECK(e.kind() == LmError::Kind::Network);
    CHECK(e.retryable());
  }
}
