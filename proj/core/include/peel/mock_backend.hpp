#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peel/backend.hpp"

namespace peel {

/// One scripted reply. Every present selector must match the request; the
/// first matching entry in file order wins.
///
///   { "task": "disagree", "role": "integrator", "step": 1, "attempt": 0,
///     "model": "mock-a", "input_hash": "...", "contains": "substring of the prompt",
///     "input": { ...subset of the task input... },
///     "response": "<text>" | {json},  "transient_failures": 2 }
///
/// `transient_failures` makes the first n matching calls fail with a
/// retryable error before the reply is served.
struct MockScriptEntry {
  std::optional<std::string> task;
  std::optional<std::string> role;
  std::optional<int> step;
  std::optional<int> attempt;
  std::optional<std::string> model;
  std::optional<std::string> input_hash;
  std::optional<std::string> contains;
  nlohmann::json input;  // null matches anything
  std::string response;
  int transient_failures = 0;
};

/// Script file: {"strict": false, "responses": [entries...]}. In strict mode a
/// request no entry matches is a BackendError; otherwise a deterministic
/// synthetic reply is built from the request.
struct MockScript {
  bool strict = false;
  std::vector<MockScriptEntry> entries;

  // Failures already served per entry; shared by every backend using the script.
  std::shared_ptr<std::mutex> lock = std::make_shared<std::mutex>();
  std::vector<int> failures_served;

  static MockScript from_json(const nlohmann::json& doc);
  static MockScript load(const std::filesystem::path& path);
};

/// True when every key of `subset` is present in `doc` with a matching value
/// (objects recursively, everything else by equality).
bool json_subset(const nlohmann::json& subset, const nlohmann::json& doc);

struct MockCall {
  std::string model;
  RequestTag tag;
  bool scripted = false;
};

/// Offline backend for tests and reproducible runs. Several instances (one per
/// role) can share a script so transient-failure counters are global.
class MockBackend final : public LlmBackend {
 public:
  MockBackend(std::string identity, std::shared_ptr<MockScript> script, std::uint64_t seed);

  std::string complete(const std::string& prompt, const std::string& system,
                       const CompletionParams& params, const RequestTag& tag) override;
  std::string identity() const override { return identity_; }

  std::vector<MockCall> calls() const;
  std::size_t call_count() const;

 private:
  std::string identity_;
  std::shared_ptr<MockScript> script_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::vector<MockCall> calls_;
};

/// The reply an unscripted request gets: a plausible, schema-conforming JSON
/// payload derived from the task input alone, so results depend only on
/// (model, seed, input).
std::string synthesize_mock_reply(const std::string& model, std::uint64_t seed, const RequestTag& tag);

}  // namespace peel
