#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "peel/error.hpp"

namespace peel {

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
};

/// Routing metadata attached to every ensemble call. Live backends ignore
/// it; the mock backend uses it to look up scripted responses and to
/// synthesize deterministic ones.
struct RequestTag {
  std::string task_kind;
  std::string input_hash;
  std::string role;  // worker_a | worker_b | integrator
  int step = 0;      // prompt index within the role's protocol
  int attempt = 0;   // 0 for the first ask, then one per repair re-ask
  nlohmann::json input;
  // Step-specific material: earlier outputs of the same role, or the worker
  // payloads an integrator is judging.
  nlohmann::json context;
};

/// A chat-completion model: one system prompt, one user prompt, one reply.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;

  virtual std::string complete(const std::string& prompt, const std::string& system,
                               const CompletionParams& params, const RequestTag& tag) = 0;

  /// Model name; workers must differ by identity.
  virtual std::string identity() const = 0;
};

// Failure worth retrying: connection problems, HTTP 429 and 5xx.
class TransientBackendError : public BackendError {
 public:
  using BackendError::BackendError;
};

struct RetryPolicy {
  int retry_limit = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};

  std::chrono::milliseconds delay_for(int retry) const;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;
SleepFn real_sleep();

/// Calls the backend, retrying transient failures with exponential backoff.
/// Throws BackendError carrying the last failure once retry_limit retries
/// are spent; non-transient BackendErrors propagate immediately.
std::string complete_with_retry(LlmBackend& backend, const std::string& prompt,
                                const std::string& system, const CompletionParams& params,
                                const RequestTag& tag, const RetryPolicy& policy,
                                const SleepFn& sleep);

/// OpenAI-compatible chat-completions endpoint. The API key is read from the
/// named environment variable when the backend is constructed.
struct OpenAiBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env;
  std::chrono::seconds timeout{600};
};

std::unique_ptr<LlmBackend> make_openai_backend(const OpenAiBackendConfig& config);

}  // namespace peel
