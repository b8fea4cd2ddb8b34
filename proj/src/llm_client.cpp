#include "dialogcode/llm_client.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

using nlohmann::json;

double NoiseProfile::epsilon(Dimension d) const {
  switch (d) {
    case Dimension::kEvent: return event;
    case Dimension::kAct: return act;
    case Dimension::kCombined: return combined;
  }
  return 0.0;
}

std::string_view to_string(TemplateId t) {
  switch (t) {
    case TemplateId::kRevision: return "revision";
    case TemplateId::kEvent: return "event";
    case TemplateId::kAct: return "act";
    case TemplateId::kCombined: return "combined";
    case TemplateId::kConsistencyCheck: return "consistency";
  }
  return "?";
}

std::string ProviderConfig::cache_identity() const {
  if (!is_local() || !mock) return model_name;
  json m{{"seed", mock->seed},
         {"event", mock->noise.event},
         {"act", mock->noise.act},
         {"combined", mock->noise.combined},
         {"confusion", mock->noise.confusion},
         {"oracle", mock->oracle_path},
         {"oracle_annotator", mock->oracle_annotator}};
  return model_name + "#mock:" + sha256_hex(m.dump()).substr(0, 16);
}

std::string cache_key(const ProviderConfig& cfg, const ChatRequest& req) {
  const Sampling s = req.sampling.value_or(cfg.sampling);
  json k{{"model", cfg.cache_identity()},
         {"temperature", s.temperature},
         {"max_output_tokens", s.max_output_tokens},
         {"system", req.system_text},
         {"user", req.user_text},
         {"sample_index", req.sample_index}};
  return sha256_hex(k.dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const auto doc = json::parse(read_text_file(path));
    if (doc.at("key").get<std::string>() != key) return std::nullopt;
    return doc.at("raw").get<std::string>();
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const std::string& request_hash,
                        const std::string& raw) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  json doc{{"key", key}, {"request_hash", request_hash}, {"raw", raw}, {"timestamp", ts.str()}};
  std::unique_lock lock(mutex_);
  write_text_file_atomic(dir_ / (key + ".json"), doc.dump(2));
}

TokenBucket::TokenBucket(double per_minute, double burst)
    : rate_per_sec_(per_minute / 60.0),
      burst_(burst),
      tokens_(burst),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_per_sec_ <= 0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_per_sec_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    lock.lock();
  }
}

ProviderClient::ProviderClient(ProviderConfig cfg, std::unique_ptr<ChatTransport> transport,
                               std::shared_ptr<ResponseCache> cache)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      cache_(std::move(cache)),
      bucket_(cfg_.requests_per_minute) {}

ChatResponse ProviderClient::complete(const ChatRequest& req) {
  if (trim(req.system_text).empty() || trim(req.user_text).empty()) {
    throw Error("chat request needs both system and user text");
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  };

  const std::string key = cache_key(cfg_, req);
  if (cache_) {
    if (auto hit = cache_->get(key)) return {*hit, cfg_.provider_id, elapsed(), true};
  }

  const int attempts = std::max(1, cfg_.retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    bucket_.acquire();
    try {
      ++network_calls_;
      std::string raw = transport_->send(cfg_, req);
      if (cache_) cache_->put(key, sha256_hex(req.system_text + "\n\x1f\n" + req.user_text), raw);
      return {std::move(raw), cfg_.provider_id, elapsed(), false};
    } catch (const CredentialError&) {
      throw;
    } catch (const RequestRejectedError&) {
      throw;
    } catch (const ContextLimitError&) {
      throw;
    } catch (const TransportError& e) {
      if (attempt >= attempts) {
        throw TransportError(cfg_.provider_id + ": giving up after " + std::to_string(attempt) +
                             " attempts: " + e.what());
      }
      const auto delay = cfg_.retry.base_delay * (1LL << (attempt - 1));
      spdlog::warn("{}: attempt {} failed ({}); retrying in {} ms", cfg_.provider_id, attempt,
                   e.what(), delay.count());
      std::this_thread::sleep_for(delay);
    }
  }
}

std::vector<std::string> validate(const ProviderConfig& cfg) {
  std::vector<std::string> problems;
  const std::string who = "provider '" + cfg.provider_id + "'";
  if (trim(cfg.provider_id).empty()) problems.push_back("provider_id must not be empty");
  if (trim(cfg.endpoint).empty()) problems.push_back(who + ": endpoint must not be empty");
  if (trim(cfg.model_name).empty()) problems.push_back(who + ": model_name must not be empty");
  if (cfg.sampling.temperature < 0) problems.push_back(who + ": temperature must be >= 0");
  if (cfg.sampling.max_output_tokens <= 0) problems.push_back(who + ": max_output_tokens must be positive");
  if (cfg.samples_per_task < 1) problems.push_back(who + ": samples_per_task must be >= 1");
  if (cfg.voting && !(cfg.weight > 0)) problems.push_back(who + ": voting providers need weight > 0");
  if (cfg.weight < 0) problems.push_back(who + ": weight must be non-negative");
  if (!cfg.is_local() && trim(cfg.credentials_env).empty()) {
    problems.push_back(who + ": remote providers need credentials_env");
  }
  if (cfg.is_local() && cfg.mock) {
    for (double e : {cfg.mock->noise.event, cfg.mock->noise.act, cfg.mock->noise.combined}) {
      if (e < 0 || e > 1) problems.push_back(who + ": noise rates must lie in [0, 1]");
    }
  }
  return problems;
}

}  // namespace dialogcode
