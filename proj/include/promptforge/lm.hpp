#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"

namespace promptforge {

/// Default stop sequences for completion-style prompting.
inline const std::vector<std::string> kDefaultStopSequences = {"\n\n", "\n---", "assistant"};

struct LmRequest {
  std::string model_id;
  std::string prompt;
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 150;
  std::vector<std::string> stop_sequences = kDefaultStopSequences;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;

  /// The fields that identify a request, in a fixed key order.
  nlohmann::ordered_json to_json() const;
};

class LmError : public Error {
 public:
  enum class Kind { Network, RateLimited, BadResponse };

  LmError(Kind kind, const std::string& what, int attempts = 1)
      : Error(what), kind_(kind), attempts_(attempts) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  bool retryable() const { return kind_ != Kind::BadResponse; }

 private:
  Kind kind_;
  int attempts_;
};

const char* to_string(LmError::Kind kind);

/// Text-in/text-out language model.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  /// Raw completion for `request`. Callers normally go through complete(),
  /// which validates the request and applies stop/max_tokens truncation.
  virtual std::string generate(const LmRequest& request) = 0;

  virtual std::string model_id() const { return "default"; }
};

/// Cut `text` at the first stop sequence, then at `max_tokens`
/// whitespace-delimited tokens.
std::string truncate_completion(const std::string& text, const LmRequest& request);

std::string complete(LmBackend& backend, const LmRequest& request);

// ---------------------------------------------------------------------------
// Scripted test double
// ---------------------------------------------------------------------------

class ScriptedLm : public LmBackend {
 public:
  using Handler = std::function<std::optional<std::string>(const LmRequest&)>;

  explicit ScriptedLm(std::string default_response = "", std::string model = "scripted")
      : default_response_(std::move(default_response)), model_(std::move(model)) {}

  /// Responds with `response` whenever the prompt contains `needle`.
  ScriptedLm& on_substring(std::string needle, std::string response);
  /// Responds with `response` when the prompt's stable hash equals `hash`.
  ScriptedLm& on_prompt_hash(std::uint64_t hash, std::string response);
  /// Arbitrary rule; returning nullopt falls through to the next rule.
  ScriptedLm& on(Handler handler);

  std::string generate(const LmRequest& request) override;
  std::string model_id() const override { return model_; }

  std::size_t call_count() const;
  std::vector<LmRequest> call_log() const;
  void clear_log();

 private:
  struct Rule {
    enum class Kind { Substring, PromptHash, Custom } kind;
    std::string needle;
    std::uint64_t hash = 0;
    std::string response;
    Handler handler;
  };

  std::vector<Rule> rules_;
  std::string default_response_;
  std::string model_;
  mutable std::mutex log_mutex_;
  std::vector<LmRequest> call_log_;
};

// ---------------------------------------------------------------------------
// Content-addressed response cache
// ---------------------------------------------------------------------------

/// Hex SHA-256 of the request's identifying fields (seed included).
std::string cache_key(const LmRequest& request);

struct CacheEntry {
  std::string key;
  nlohmann::ordered_json request;
  std::string response;
  std::string created_at;
};

/// Append-only JSONL file plus an in-memory index. Entries failing the
/// integrity check on load are evicted (counted, never served).
class CacheStore {
 public:
  /// In-memory only.
  CacheStore() = default;
  /// Loads `path` if it exists; new entries are appended to it.
  explicit CacheStore(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& key) const;
  void insert(const LmRequest& request, const std::string& response);

  std::size_t size() const;
  std::size_t evicted() const { return evicted_; }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  void load();

  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> index_;
  std::size_t evicted_ = 0;
};

class CachedLm : public LmBackend {
 public:
  CachedLm(std::shared_ptr<LmBackend> inner, std::shared_ptr<CacheStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  std::string generate(const LmRequest& request) override;
  std::string model_id() const override { return inner_->model_id(); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 private:
  std::shared_ptr<LmBackend> inner_;
  std::shared_ptr<CacheStore> store_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

std::shared_ptr<LmBackend> with_cache(std::shared_ptr<LmBackend> backend,
                                      std::shared_ptr<CacheStore> store);

// ---------------------------------------------------------------------------
// HTTP completions client
// ---------------------------------------------------------------------------

struct HttpLmConfig {
  std::string base_url;                       // e.g. "http://127.0.0.1:8000"
  std::string endpoint = "/v1/completions";
  std::string model = "default";
  std::string api_key;                        // empty: read PROMPTFORGE_API_KEY
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{60};
};

/// OpenAI-style completions endpoint. Network and rate-limit failures are
/// retried with exponential backoff; malformed responses are not.
class HttpLm : public LmBackend {
 public:
  explicit HttpLm(HttpLmConfig config);

  std::string generate(const LmRequest& request) override;
  std::string model_id() const override { return config_.model; }

 private:
  std::string attempt(const std::string& body);

  HttpLmConfig config_;
};

// ---------------------------------------------------------------------------
// Call ceiling
// ---------------------------------------------------------------------------

/// Shared counter of LM calls across every backend wrapped with it.
class CallBudget {
 public:
  explicit CallBudget(std::optional<std::size_t> ceiling = std::nullopt) : ceiling_(ceiling) {}

  /// Reserves one call or throws BudgetExhausted without reserving.
  void charge();
  std::size_t used() const { return used_.load(); }
  const std::optional<std::size_t>& ceiling() const { return ceiling_; }

 private:
  std::optional<std::size_t> ceiling_;
  std::atomic<std::size_t> used_{0};
};

class BudgetedLm : public LmBackend {
 public:
  BudgetedLm(std::shared_ptr<LmBackend> inner, std::shared_ptr<CallBudget> budget)
      : inner_(std::move(inner)), budget_(std::move(budget)) {}

  std::string generate(const LmRequest& request) override {
    budget_->charge();
    return inner_->generate(request);
  }
  std::string model_id() const override { return inner_->model_id(); }

 private:
  std::shared_ptr<LmBackend> inner_;
  std::shared_ptr<CallBudget> budget_;
};

}  // namespace promptforge
