#include "promptforge/lm.hpp"

#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

namespace promptforge {

namespace {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

const char* to_string(LmError::Kind kind) {
  switch (kind) {
    case LmError::Kind::Network: return "Network";
    case LmError::Kind::RateLimited: return "RateLimited";
    case LmError::Kind::BadResponse: return "BadResponse";
  }
  return "Unknown";
}

void LmRequest::validate() const {
  if (prompt.empty()) throw std::invalid_argument("LmRequest: prompt must be nonempty");
  if (!(temperature >= 0.0)) throw std::invalid_argument("LmRequest: temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("LmRequest: top_p must be in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("LmRequest: max_tokens must be > 0");
  for (const auto& s : stop_sequences) {
    if (s.empty()) throw std::invalid_argument("LmRequest: empty stop sequence");
  }
}

nlohmann::ordered_json LmRequest::to_json() const {
  nlohmann::ordered_json j;
  j["model_id"] = model_id;
  j["prompt"] = prompt;
  j["temperature"] = temperature;
  j["top_p"] = top_p;
  j["max_tokens"] = max_tokens;
  j["stop_sequences"] = stop_sequences;
  j["seed"] = seed;
  return j;
}

std::string truncate_completion(const std::string& text, const LmRequest& request) {
  std::size_t cut = text.size();
  for (const auto& stop : request.stop_sequences) {
    const auto pos = text.find(stop);
    if (pos != std::string::npos && pos < cut) cut = pos;
  }
  std::string out = text.substr(0, cut);

  // Token budget: whitespace-delimited words.
  int tokens = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(out[i])) != 0;
    if (!space && !in_word) {
      if (tokens == request.max_tokens) {
        out.resize(i);
        while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
        break;
      }
      ++tokens;
    }
    in_word = !space;
  }
  return out;
}

std::string complete(LmBackend& backend, const LmRequest& request) {
  request.validate();
  return truncate_completion(backend.generate(request), request);
}

// ---------------------------------------------------------------------------

ScriptedLm& ScriptedLm::on_substring(std::string needle, std::string response) {
  rules_.push_back({Rule::Kind::Substring, std::move(needle), 0, std::move(response), {}});
  return *this;
}

ScriptedLm& ScriptedLm::on_prompt_hash(std::uint64_t hash, std::string response) {
  rules_.push_back({Rule::Kind::PromptHash, {}, hash, std::move(response), {}});
  return *this;
}

ScriptedLm& ScriptedLm::on(Handler handler) {
  rules_.push_back({Rule::Kind::Custom, {}, 0, {}, std::move(handler)});
  return *this;
}

std::string ScriptedLm::generate(const LmRequest& request) {
  {
    std::lock_guard lock(log_mutex_);
    call_log_.push_back(request);
  }
  for (const auto& rule : rules_) {
    switch (rule.kind) {
      case Rule::Kind::Substring:
        if (request.prompt.find(rule.needle) != std::string::npos) return rule.response;
        break;
      case Rule::Kind::PromptHash:
        if (stable_hash(request.prompt) == rule.hash) return rule.response;
        break;
      case Rule::Kind::Custom:
        if (auto r = rule.handler(request)) return *r;
        break;
    }
  }
  return default_response_;
}

std::size_t ScriptedLm::call_count() const {
  std::lock_guard lock(log_mutex_);
  return call_log_.size();
}

std::vector<LmRequest> ScriptedLm::call_log() const {
  std::lock_guard lock(log_mutex_);
  return call_log_;
}

void ScriptedLm::clear_log() {
  std::lock_guard lock(log_mutex_);
  call_log_.clear();
}

// ---------------------------------------------------------------------------

std::string cache_key(const LmRequest& request) { return sha256_hex(request.to_json().dump()); }

CacheStore::CacheStore(std::filesystem::path path) : path_(std::move(path)) { load(); }

void CacheStore::load() {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      const auto key = j.at("key").get<std::string>();
      const auto response = j.at("response").get<std::string>();
      // Integrity: the key must be the digest of the stored request, and the
      // stored response digest must match.
      const auto recomputed =
          sha256_hex(j.at("request").dump());
      if (recomputed != key || j.at("response_sha256").get<std::string>() != sha256_hex(response)) {
        ++evicted_;
        continue;
      }
      index_[key] = response;
    } catch (const nlohmann::json::exception&) {
      ++evicted_;
    }
  }
}

std::optional<std::string> CacheStore::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

void CacheStore::insert(const LmRequest& request, const std::string& response) {
  const auto request_json = request.to_json();
  const auto key = sha256_hex(request_json.dump());
  std::unique_lock lock(mutex_);
  if (!index_.emplace(key, response).second) return;
  if (path_) {
    nlohmann::ordered_json line;
    line["key"] = key;
    line["request"] = request_json;
    line["response"] = response;
    line["response_sha256"] = sha256_hex(response);
    line["created_at"] = utc_timestamp();
    std::ofstream out(*path_, std::ios::app);
    out << line.dump() << '\n';
    out.flush();
  }
}

std::size_t CacheStore::size() const {
  std::shared_lock lock(mutex_);
  return index_.size();
}

std::string CachedLm::generate(const LmRequest& request) {
  const auto key = cache_key(request);
  if (auto hit = store_->lookup(key)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  auto response = inner_->generate(request);
  store_->insert(request, response);
  return response;
}

std::shared_ptr<LmBackend> with_cache(std::shared_ptr<LmBackend> backend,
                                      std::shared_ptr<CacheStore> store) {
  return std::make_shared<CachedLm>(std::move(backend), std::move(store));
}

// ---------------------------------------------------------------------------

HttpLm::HttpLm(HttpLmConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) {
    if (const char* key = std::getenv("PROMPTFORGE_API_KEY")) config_.api_key = key;
  }
  if (config_.base_url.empty()) {
    if (const char* url = std::getenv("PROMPTFORGE_BASE_URL")) config_.base_url = url;
  }
  if (config_.base_url.empty()) throw ConfigError("HttpLm: base_url is not configured");
}

std::string HttpLm::attempt(const std::string& body) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto result = client.Post(config_.endpoint, headers, body, "application/json");
  if (!result) {
    throw LmError(LmError::Kind::Network, "HTTP request failed: " + httplib::to_string(result.error()));
  }
  if (result->status == 429) throw LmError(LmError::Kind::RateLimited, "rate limited (429)");
  if (result->status >= 500) {
    throw LmError(LmError::Kind::Network, "server error " + std::to_string(result->status));
  }
  if (result->status != 200) {
    throw LmError(LmError::Kind::BadResponse, "unexpected status " + std::to_string(result->status));
  }
  try {
    const auto j = nlohmann::json::parse(result->body);
    return j.at("choices").at(0).at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LmError(LmError::Kind::BadResponse, std::string("malformed completion response: ") + e.what());
  }
}

std::string HttpLm::generate(const LmRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = request.model_id.empty() ? config_.model : request.model_id;
  body["prompt"] = request.prompt;
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["max_tokens"] = request.max_tokens;
  body["stop"] = request.stop_sequences;
  body["seed"] = request.seed;
  const auto payload = body.dump();

  auto backoff = config_.initial_backoff;
  for (int attempt_no = 0;; ++attempt_no) {
    try {
      return attempt(payload);
    } catch (const LmError& e) {
      if (!e.retryable() || attempt_no >= config_.max_retries) {
        throw LmError(e.kind(), e.what(), attempt_no + 1);
      }
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

// ---------------------------------------------------------------------------

void CallBudget::charge() {
  if (!ceiling_) {
    ++used_;
    return;
  }
  std::size_t current = used_.load();
  do {
    if (current >= *ceiling_) {
      throw BudgetExhausted("LM call ceiling of " + std::to_string(*ceiling_) + " reached");
    }
  } while (!used_.compare_exchange_weak(current, current + 1));
}

}  // namespace promptforge
