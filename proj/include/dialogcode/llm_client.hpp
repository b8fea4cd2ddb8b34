#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dialogcode/codebook.hpp"

namespace dialogcode {

struct Sampling {
  double temperature = 0.7;
  int max_output_tokens = 1024;

  bool operator==(const Sampling&) const = default;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
};

// Per-class confusion weights for wrong answers: truth -> wrong label -> weight.
// Labels missing from a row get weight 0; an absent row means uniform.
using ConfusionWeights = std::map<std::string, std::map<std::string, double>>;

struct NoiseProfile {
  double event = 0.0;
  double act = 0.0;
  double combined = 0.0;
  ConfusionWeights confusion;

  double epsilon(Dimension d) const;
};

// Settings for the in-process provider (endpoint "local").
struct MockSettings {
  std::uint64_t seed = 0;
  NoiseProfile noise;
  // Ground-truth CSV the mock answers from; utterances absent from it get a
  // seeded pseudo-random truth.
  std::string oracle_path;
  // Annotator whose labels form the oracle.
  std::string oracle_annotator = "H1";
  // Test hook: calls beyond this many fail with TransportError. 0 disables.
  std::uint64_t fail_after_calls = 0;
};

struct ProviderConfig {
  std::string provider_id;
  std::string endpoint;  // URL, or "local" for the mock
  std::string model_name;
  Sampling sampling;
  double weight = 1.0;        // vote weight
  int samples_per_task = 5;   // samples drawn per provider per task
  std::string credentials_env;
  bool voting = true;
  double requests_per_minute = 0.0;  // 0 = unlimited
  RetryPolicy retry;
  std::optional<MockSettings> mock;

  bool is_local() const { return endpoint == "local"; }
  // Model identity used in cache keys. For the mock this folds in the seed
  // and noise so differently configured mocks never share entries.
  std::string cache_identity() const;
};

// Which prompt family produced a request.
enum class TemplateId { kRevision, kEvent, kAct, kCombined, kConsistencyCheck };
std::string_view to_string(TemplateId t);

// Request metadata that never goes on the wire. The mock provider reads it
// to find its hidden oracle; remote adapters ignore it.
struct TaskTag {
  TemplateId kind = TemplateId::kEvent;
  std::vector<std::string> utterance_ids;
  std::map<std::string, std::string> attrs;
};

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  std::optional<Sampling> sampling;
  int sample_index = 0;
  TaskTag tag;
};

struct ChatResponse {
  std::string raw_text;
  std::string provider_id;
  std::chrono::milliseconds latency{0};
  bool cached = false;
};

// One attempt against one backend. Throws TransportError for transient
// failures, and CredentialError, ContextLimitError or RequestRejectedError
// for ones a retry cannot fix.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string send(const ProviderConfig& cfg, const ChatRequest& req) = 0;
};

std::string cache_key(const ProviderConfig& cfg, const ChatRequest& req);

// One JSON file per key. Concurrent readers, serialized writers.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& request_hash, const std::string& raw);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

class TokenBucket {
 public:
  // `per_minute` <= 0 disables limiting.
  explicit TokenBucket(double per_minute, double burst = 1.0);
  void acquire();

 private:
  double rate_per_sec_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

// A configured provider: cache lookup, rate limiting and bounded retries in
// front of a transport. Safe for concurrent use.
class ProviderClient {
 public:
  ProviderClient(ProviderConfig cfg, std::unique_ptr<ChatTransport> transport,
                 std::shared_ptr<ResponseCache> cache);

  ChatResponse complete(const ChatRequest& req);

  const ProviderConfig& config() const { return cfg_; }
  std::uint64_t network_calls() const { return network_calls_.load(); }

 private:
  ProviderConfig cfg_;
  std::unique_ptr<ChatTransport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  TokenBucket bucket_;
  std::atomic<std::uint64_t> network_calls_{0};
};

// OpenAI-style chat-completion adapter (also serves DeepSeek and any other
// compatible endpoint). The API key is read from cfg.credentials_env.
std::unique_ptr<ChatTransport> make_openai_compatible_transport();

std::vector<std::string> validate(const ProviderConfig& cfg);

}  // namespace dialogcode
