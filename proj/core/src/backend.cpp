#include "peel/backend.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace peel {

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
  const double scaled = static_cast<double>(base_delay.count()) * std::pow(multiplier, retry);
  const double capped = std::min(scaled, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

SleepFn real_sleep() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string complete_with_retry(LlmBackend& backend, const std::string& prompt,
                                const std::string& system, const CompletionParams& params,
                                const RequestTag& tag, const RetryPolicy& policy,
                                const SleepFn& sleep) {
  for (int retry = 0;; ++retry) {
    try {
      return backend.complete(prompt, system, params, tag);
    } catch (const TransientBackendError& e) {
      if (retry >= policy.retry_limit) {
        throw BackendError(backend.identity() + ": giving up after " + std::to_string(retry + 1) +
                           " attempts: " + e.what());
      }
      if (sleep) sleep(policy.delay_for(retry));
    }
  }
}

}  // namespace peel
