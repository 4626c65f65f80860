#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <regex>

#include "peel/backend.hpp"

namespace peel {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl parse_base_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw UsageError("invalid backend base URL: " + url);
  ParsedUrl out{m[1].str(), m[2].matched ? m[2].str() : std::string()};
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

class OpenAiBackend final : public LlmBackend {
 public:
  explicit OpenAiBackend(const OpenAiBackendConfig& config) : config_(config), url_(parse_base_url(config.base_url)) {
    if (config.model.empty()) throw UsageError("backend model name is empty");
    const char* key = config.api_key_env.empty() ? nullptr : std::getenv(config.api_key_env.c_str());
    if (!key || !*key) {
      throw UsageError("environment variable " +
                       (config.api_key_env.empty() ? std::string("<unset>") : config.api_key_env) +
                       " holding the API key for " + config.model + " is not set");
    }
    api_key_ = key;
  }

  std::string identity() const override { return config_.model; }

  std::string complete(const std::string& prompt, const std::string& system,
                       const CompletionParams& params, const RequestTag&) override {
    nlohmann::json body = {
        {"model", config_.model},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                {{"role", "user"}, {"content", prompt}}})},
        {"temperature", params.temperature},
        {"max_tokens", params.max_tokens},
    };
    if (params.seed) body["seed"] = *params.seed;

    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(30);
    client.set_read_timeout(static_cast<time_t>(config_.timeout.count()));
    client.set_write_timeout(60);
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

    auto res = client.Post(url_.path + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
      throw TransientBackendError(config_.model + ": transport error: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransientBackendError(config_.model + ": HTTP " + std::to_string(res->status) + ": " +
                                  res->body.substr(0, 512));
    }
    if (res->status != 200) {
      throw BackendError(config_.model + ": HTTP " + std::to_string(res->status) + ": " +
                         res->body.substr(0, 512));
    }
    try {
      const auto reply = nlohmann::json::parse(res->body);
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(config_.model + ": unexpected response body: " + std::string(e.what()));
    }
  }

 private:
  OpenAiBackendConfig config_;
  ParsedUrl url_;
  std::string api_key_;
};

}  // namespace

std::unique_ptr<LlmBackend> make_openai_backend(const OpenAiBackendConfig& config) {
  return std::make_unique<OpenAiBackend>(config);
}

}  // namespace peel
