#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "dialogcode/error.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw RequestRejectedError("endpoint '" + url + "' is not an http(s) URL");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class OpenAiCompatibleTransport final : public ChatTransport {
 public:
  std::string send(const ProviderConfig& cfg, const ChatRequest& req) override {
    const char* key = std::getenv(cfg.credentials_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw CredentialError(cfg.provider_id + ": environment variable " + cfg.credentials_env +
                            " is not set");
    }
    const auto url = split_url(cfg.endpoint);
    const Sampling s = req.sampling.value_or(cfg.sampling);
    json body{{"model", cfg.model_name},
              {"messages",
               json::array({{{"role", "system"}, {"content", req.system_text}},
                            {{"role", "user"}, {"content", req.user_text}}})},
              {"temperature", s.temperature},
              {"max_tokens", s.max_output_tokens}};

    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(30);
    client.set_read_timeout(180);
    client.set_bearer_token_auth(key);
    auto res = client.Post(url.path, body.dump(), "application/json");
    if (!res) {
      throw TransportError(cfg.provider_id + ": " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw CredentialError(cfg.provider_id + ": authentication rejected (HTTP " +
                            std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      throw TransportError(cfg.provider_id + ": HTTP " + std::to_string(status));
    }
    if (status >= 400) {
      const auto lowered = to_lower(res->body);
      if (lowered.find("context_length") != std::string::npos ||
          lowered.find("maximum context") != std::string::npos) {
        throw ContextLimitError(cfg.provider_id + ": prompt exceeds the model context");
      }
      throw RequestRejectedError(cfg.provider_id + ": HTTP " + std::to_string(status) + ": " +
                                 res->body.substr(0, 500));
    }
    try {
      const auto doc = json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(cfg.provider_id + ": malformed completion body: " + e.what());
    }
  }
};

}  // namespace

std::unique_ptr<ChatTransport> make_openai_compatible_transport() {
  return std::make_unique<OpenAiCompatibleTransport>();
}

}  // namespace dialogcode
