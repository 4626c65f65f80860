#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "peel/backend.hpp"
#include "peel/prompts.hpp"

namespace peel {

enum class TaskKind { Segment, Summarize, Extract, ClassifyTopicAttitude, Disagree, AggregateClassify };

std::string_view to_string(TaskKind kind) noexcept;
std::optional<TaskKind> task_kind_from_string(std::string_view text) noexcept;
/// Prompt-template family of a task ("classify" for ClassifyTopicAttitude).
std::string_view prompt_family(TaskKind kind) noexcept;

/// R3: the integrator matches both workers (which then match each other).
/// R2: it matches exactly one worker. R1: it matches neither.
enum class AgreementOutcome { R1, R2MatchesA, R2MatchesB, R3 };

std::string_view to_string(AgreementOutcome outcome) noexcept;
std::optional<AgreementOutcome> agreement_from_string(std::string_view text) noexcept;

/// An absent worker payload compares unequal to everything. When the workers
/// disagree but the integrator matches both (possible with a non-transitive
/// `equiv`), worker A wins.
template <typename T, typename Equiv>
AgreementOutcome classify_agreement(const std::optional<T>& a, const std::optional<T>& b, const T& final,
                                    Equiv&& equiv) {
  const bool fa = a && equiv(final, *a);
  const bool fb = b && equiv(final, *b);
  const bool ab = a && b && equiv(*a, *b);
  if (ab && fa && fb) return AgreementOutcome::R3;
  if (fa) return AgreementOutcome::R2MatchesA;
  if (fb) return AgreementOutcome::R2MatchesB;
  return AgreementOutcome::R1;
}

using PayloadEquiv = std::function<bool(const nlohmann::json&, const nlohmann::json&)>;

/// Worker payloads are null when absent.
AgreementOutcome classify_agreement_json(const nlohmann::json& a, const nlohmann::json& b,
                                         const nlohmann::json& final, const PayloadEquiv& equiv);

/// ISO-8601 UTC timestamps.
using Clock = std::function<std::string()>;
Clock system_clock();
Clock fixed_clock(std::string stamp);
std::string format_utc(std::int64_t epoch_seconds);

struct EnsembleConfig {
  std::shared_ptr<LlmBackend> worker_a;
  std::shared_ptr<LlmBackend> worker_b;
  std::shared_ptr<LlmBackend> integrator;
  PromptSet prompts = PromptSet::builtin();
  RetryPolicy retry;
  std::filesystem::path cache_dir;  // empty disables caching
  bool concurrent_workers = true;
  CompletionParams params;
  SleepFn sleep = real_sleep();
  Clock clock = system_clock();

  /// Throws UsageError: missing backend, or workers with the same identity.
  void check() const;
  nlohmann::json models() const;
  std::string prompt_version(TaskKind kind) const { return prompts.version_for(prompt_family(kind)); }
};

/// Pure function of the task kind, prompt version, model identities and the
/// canonicalized input.
std::string task_input_hash(TaskKind kind, const std::string& prompt_version, const nlohmann::json& models,
                            const nlohmann::json& input);

struct EnsembleTaskRecord {
  TaskKind kind = TaskKind::Segment;
  std::string input_hash;
  std::string prompt_version;
  nlohmann::json models;
  nlohmann::json input;
  nlohmann::json worker_a_out;  // null when absent
  nlohmann::json worker_b_out;
  nlohmann::json worker_a_error;  // message when the worker produced nothing usable
  nlohmann::json worker_b_error;
  nlohmann::json integrated_out;
  std::optional<AgreementOutcome> agreement;  // unset for single-model tasks
  nlohmann::json trace = nlohmann::json::array();  // intermediate integrator outputs
  std::string started_at;
  std::string finished_at;
  bool from_cache = false;  // not persisted
};

nlohmann::json to_json(const EnsembleTaskRecord& record);
EnsembleTaskRecord record_from_json(const nlohmann::json& doc);

/// `<dir>/<task_kind>/<input_hash>.json`, written atomically.
class TaskCache {
 public:
  explicit TaskCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::filesystem::path path_for(TaskKind kind, const std::string& input_hash) const;
  /// Unreadable or mismatching entries count as misses.
  std::optional<EnsembleTaskRecord> load(TaskKind kind, const std::string& input_hash) const;
  void store(const EnsembleTaskRecord& record) const;

 private:
  std::filesystem::path dir_;
};

/// Outcome of checking one reply. Schema problems get up to two re-asks,
/// structural problems (chain validation) one.
struct PayloadCheck {
  enum class Kind { Ok, Schema, Structural };
  Kind kind = Kind::Ok;
  std::string problem;

  static PayloadCheck ok() { return {}; }
  static PayloadCheck schema(std::string p) { return {Kind::Schema, std::move(p)}; }
  static PayloadCheck structural(std::string p) { return {Kind::Structural, std::move(p)}; }
};
using PayloadChecker = std::function<PayloadCheck(const nlohmann::json&)>;

inline constexpr int kSchemaReasks = 2;
inline constexpr int kStructuralReasks = 1;

/// One model playing one role within one task. Each ask is a new step.
class RoleSession {
 public:
  RoleSession(LlmBackend& backend, std::string role, const EnsembleConfig& config, RequestTag base);

  const std::string& role() const noexcept { return base_.role; }
  const EnsembleConfig& config() const noexcept { return config_; }

  std::string ask(const std::string& system, const std::string& user, const nlohmann::json& context = {});

  /// Asks for a JSON object, re-asking with the schema and the specific
  /// problem until `check` accepts it. Throws MalformedOutput when the
  /// re-ask budget runs out.
  nlohmann::json ask_json(const std::string& system, const std::string& user, const std::string& schema,
                          const PayloadChecker& check, const nlohmann::json& context = {});

 private:
  std::string call(const std::string& system, const std::string& user, const nlohmann::json& context,
                   int attempt);

  LlmBackend& backend_;
  const EnsembleConfig& config_;
  RequestTag base_;
  int step_ = 0;
};

/// Extracts the first JSON object from a reply, tolerating code fences and
/// surrounding prose. nullopt when none parses.
std::optional<nlohmann::json> extract_json_object(const std::string& reply);

/// How one task kind is carried out. `integrate` receives null for absent
/// worker payloads. Single-model tasks run only the integrator backend.
struct EnsembleProtocol {
  std::function<nlohmann::json(RoleSession&, const nlohmann::json& input)> worker;
  std::function<nlohmann::json(RoleSession&, const nlohmann::json& input, const nlohmann::json& a,
                               const nlohmann::json& b, nlohmann::json& trace)>
      integrate;
  PayloadEquiv equivalent;
  bool single_model = false;
};

/// Runs both workers (concurrently when configured), then the integrator, and
/// records the agreement outcome. A cached record for the same input hash is
/// returned without any backend call. A worker whose output never conforms is
/// recorded as absent; both absent is MalformedOutput.
EnsembleTaskRecord run_ensemble_task(TaskKind kind, const nlohmann::json& input, const EnsembleConfig& config,
                                     const EnsembleProtocol& protocol);

}  // namespace peel
