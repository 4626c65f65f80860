#include "peel/ensemble.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <future>

#include "peel/digest.hpp"
#include "peel/fsutil.hpp"
#include "peel/log.hpp"

namespace peel {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TaskKind, std::string_view>, 6> kTaskNames = {{
    {TaskKind::Segment, "segment"},
    {TaskKind::Summarize, "summarize"},
    {TaskKind::Extract, "extract"},
    {TaskKind::ClassifyTopicAttitude, "classify_topic_attitude"},
    {TaskKind::Disagree, "disagree"},
    {TaskKind::AggregateClassify, "aggregate_classify"},
}};

constexpr std::array<std::pair<AgreementOutcome, std::string_view>, 4> kOutcomeNames = {{
    {AgreementOutcome::R1, "R1"},
    {AgreementOutcome::R2MatchesA, "R2_matches_a"},
    {AgreementOutcome::R2MatchesB, "R2_matches_b"},
    {AgreementOutcome::R3, "R3"},
}};

}  // namespace

std::string_view to_string(TaskKind kind) noexcept {
  for (const auto& [k, name] : kTaskNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<TaskKind> task_kind_from_string(std::string_view text) noexcept {
  for (const auto& [k, name] : kTaskNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::string_view prompt_family(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Segment: return "segment";
    case TaskKind::Summarize: return "summarize";
    case TaskKind::Extract: return "extract";
    case TaskKind::ClassifyTopicAttitude: return "classify";
    case TaskKind::Disagree: return "disagree";
    case TaskKind::AggregateClassify: return "aggregate";
  }
  return "?";
}

std::string_view to_string(AgreementOutcome outcome) noexcept {
  for (const auto& [o, name] : kOutcomeNames) {
    if (o == outcome) return name;
  }
  return "?";
}

std::optional<AgreementOutcome> agreement_from_string(std::string_view text) noexcept {
  for (const auto& [o, name] : kOutcomeNames) {
    if (name == text) return o;
  }
  return std::nullopt;
}

AgreementOutcome classify_agreement_json(const json& a, const json& b, const json& final,
                                         const PayloadEquiv& equiv) {
  auto wrap = [](const json& j) { return j.is_null() ? std::optional<json>() : std::optional<json>(j); };
  return classify_agreement(wrap(a), wrap(b), final, equiv);
}

// ---------------------------------------------------------------------------
// Clock
// ---------------------------------------------------------------------------

std::string format_utc(std::int64_t epoch_seconds) {
  const std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Clock system_clock() {
  return [] {
    const auto now = std::chrono::system_clock::now();
    return format_utc(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
  };
}

Clock fixed_clock(std::string stamp) {
  return [stamp = std::move(stamp)] { return stamp; };
}

// ---------------------------------------------------------------------------
// Config and records
// ---------------------------------------------------------------------------

void EnsembleConfig::check() const {
  if (!worker_a || !worker_b || !integrator) throw UsageError("ensemble needs worker_a, worker_b and integrator");
  if (worker_a->identity() == worker_b->identity()) {
    throw UsageError("worker_a and worker_b must be different models (both are " + worker_a->identity() + ")");
  }
}

json EnsembleConfig::models() const {
  return {{"worker_a", worker_a ? worker_a->identity() : ""},
          {"worker_b", worker_b ? worker_b->identity() : ""},
          {"integrator", integrator ? integrator->identity() : ""}};
}

std::string task_input_hash(TaskKind kind, const std::string& prompt_version, const json& models,
                            const json& input) {
  return digest_json({{"task_kind", to_string(kind)},
                      {"prompt_version", prompt_version},
                      {"models", models},
                      {"input", input}});
}

json to_json(const EnsembleTaskRecord& r) {
  return {{"task_kind", to_string(r.kind)},
          {"input_hash", r.input_hash},
          {"prompt_version", r.prompt_version},
          {"models", r.models},
          {"input", r.input},
          {"worker_a_out", r.worker_a_out},
          {"worker_b_out", r.worker_b_out},
          {"worker_a_error", r.worker_a_error},
          {"worker_b_error", r.worker_b_error},
          {"integrated_out", r.integrated_out},
          {"agreement", r.agreement ? json(to_string(*r.agreement)) : json()},
          {"trace", r.trace},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at}};
}

EnsembleTaskRecord record_from_json(const json& doc) {
  try {
    EnsembleTaskRecord r;
    const auto kind = task_kind_from_string(doc.at("task_kind").get<std::string>());
    if (!kind) throw SchemaError("unknown task_kind in task record");
    r.kind = *kind;
    r.input_hash = doc.at("input_hash").get<std::string>();
    r.prompt_version = doc.at("prompt_version").get<std::string>();
    r.models = doc.value("models", json());
    r.input = doc.value("input", json());
    r.worker_a_out = doc.value("worker_a_out", json());
    r.worker_b_out = doc.value("worker_b_out", json());
    r.worker_a_error = doc.value("worker_a_error", json());
    r.worker_b_error = doc.value("worker_b_error", json());
    r.integrated_out = doc.at("integrated_out");
    const json& ag = doc.value("agreement", json());
    if (!ag.is_null()) {
      r.agreement = agreement_from_string(ag.get<std::string>());
      if (!r.agreement) throw SchemaError("unknown agreement outcome in task record");
    }
    r.trace = doc.value("trace", json::array());
    r.started_at = doc.value("started_at", "");
    r.finished_at = doc.value("finished_at", "");
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("task record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

std::filesystem::path TaskCache::path_for(TaskKind kind, const std::string& input_hash) const {
  return dir_ / std::string(to_string(kind)) / (input_hash + ".json");
}

std::optional<EnsembleTaskRecord> TaskCache::load(TaskKind kind, const std::string& input_hash) const {
  const auto path = path_for(kind, input_hash);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto record = record_from_json(json::parse(read_file(path)));
    if (record.kind != kind || record.input_hash != input_hash) {
      log_warn("cache entry " + path.string() + " does not match its key; ignoring");
      return std::nullopt;
    }
    record.from_cache = true;
    return record;
  } catch (const std::exception& e) {
    log_warn("unreadable cache entry " + path.string() + ": " + e.what());
    return std::nullopt;
  }
}

void TaskCache::store(const EnsembleTaskRecord& record) const {
  write_file_atomic(path_for(record.kind, record.input_hash), to_json(record).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

std::optional<json> extract_json_object(const std::string& reply) {
  try {
    json whole = json::parse(reply);
    if (whole.is_object()) return whole;
  } catch (const json::parse_error&) {
  }
  // First '{' whose balanced span parses.
  for (std::size_t open = reply.find('{'); open != std::string::npos; open = reply.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < reply.size(); ++i) {
      const char c = reply[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        try {
          json candidate = json::parse(reply.substr(open, i - open + 1));
          if (candidate.is_object()) return candidate;
        } catch (const json::parse_error&) {
        }
        break;
      }
    }
  }
  return std::nullopt;
}

RoleSession::RoleSession(LlmBackend& backend, std::string role, const EnsembleConfig& config, RequestTag base)
    : backend_(backend), config_(config), base_(std::move(base)) {
  base_.role = std::move(role);
}

std::string RoleSession::call(const std::string& system, const std::string& user, const json& context,
                              int attempt) {
  RequestTag tag = base_;
  tag.step = step_;
  tag.attempt = attempt;
  tag.context = context;
  return complete_with_retry(backend_, user, system, config_.params, tag, config_.retry, config_.sleep);
}

std::string RoleSession::ask(const std::string& system, const std::string& user, const json& context) {
  std::string reply = call(system, user, context, 0);
  ++step_;
  return reply;
}

json RoleSession::ask_json(const std::string& system, const std::string& user, const std::string& schema,
                           const PayloadChecker& check, const json& context) {
  int schema_left = kSchemaReasks;
  int structural_left = kStructuralReasks;
  std::string prompt = user;
  for (int attempt = 0;; ++attempt) {
    const std::string reply = call(system, prompt, context, attempt);
    PayloadCheck verdict;
    auto parsed = extract_json_object(reply);
    if (!parsed) {
      verdict = PayloadCheck::schema("the reply is not a JSON object");
    } else {
      try {
        verdict = check ? check(*parsed) : PayloadCheck::ok();
      } catch (const std::exception& e) {
        verdict = PayloadCheck::schema(e.what());
      }
    }
    if (verdict.kind == PayloadCheck::Kind::Ok) {
      ++step_;
      return *parsed;
    }
    int& budget = verdict.kind == PayloadCheck::Kind::Schema ? schema_left : structural_left;
    if (budget == 0) {
      ++step_;
      throw MalformedOutput(backend_.identity() + " (" + base_.role + ", " + base_.task_kind + " step " +
                            std::to_string(step_ - 1) + "): " + verdict.problem);
    }
    --budget;
    log_info(backend_.identity() + ": re-asking " + base_.task_kind + " (" + verdict.problem + ")");
    prompt = user + "\n\n" +
             config_.prompts.render("common.repair", {{"problem", verdict.problem},
                                                      {"previous", reply.substr(0, 8000)},
                                                      {"schema", schema}});
  }
}

// ---------------------------------------------------------------------------
// Task runner
// ---------------------------------------------------------------------------

namespace {

struct WorkerResult {
  json payload;  // null when absent
  json error;
};

WorkerResult run_worker(LlmBackend& backend, const char* role, const EnsembleConfig& config,
                        const RequestTag& base, const EnsembleProtocol& protocol, const json& input) {
  RoleSession session(backend, role, config, base);
  try {
    return {protocol.worker(session, input), json()};
  } catch (const MalformedOutput& e) {
    log_warn(std::string(role) + " produced no usable output: " + e.what());
    return {json(), e.what()};
  }
}

}  // namespace

EnsembleTaskRecord run_ensemble_task(TaskKind kind, const json& input, const EnsembleConfig& config,
                                     const EnsembleProtocol& protocol) {
  if (protocol.single_model) {
    if (!config.integrator) throw UsageError("ensemble needs an integrator backend");
  } else {
    config.check();
  }
  const std::string prompt_version = config.prompt_version(kind);
  const json models = config.models();
  const std::string hash = task_input_hash(kind, prompt_version, models, input);

  std::optional<TaskCache> cache;
  if (!config.cache_dir.empty()) {
    cache.emplace(config.cache_dir);
    if (auto hit = cache->load(kind, hash)) return *hit;
  }

  EnsembleTaskRecord record;
  record.kind = kind;
  record.input_hash = hash;
  record.prompt_version = prompt_version;
  record.models = models;
  record.input = input;
  record.started_at = config.clock();

  RequestTag base;
  base.task_kind = std::string(to_string(kind));
  base.input_hash = hash;
  base.input = input;

  if (!protocol.single_model) {
    WorkerResult a, b;
    if (config.concurrent_workers) {
      auto fa = std::async(std::launch::async, [&] {
        return run_worker(*config.worker_a, "worker_a", config, base, protocol, input);
      });
      auto fb = std::async(std::launch::async, [&] {
        return run_worker(*config.worker_b, "worker_b", config, base, protocol, input);
      });
      // Both futures are drained before either exception propagates.
      std::exception_ptr failure;
      try {
        a = fa.get();
      } catch (...) {
        failure = std::current_exception();
      }
      try {
        b = fb.get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
      if (failure) std::rethrow_exception(failure);
    } else {
      a = run_worker(*config.worker_a, "worker_a", config, base, protocol, input);
      b = run_worker(*config.worker_b, "worker_b", config, base, protocol, input);
    }
    record.worker_a_out = std::move(a.payload);
    record.worker_b_out = std::move(b.payload);
    record.worker_a_error = std::move(a.error);
    record.worker_b_error = std::move(b.error);
    if (record.worker_a_out.is_null() && record.worker_b_out.is_null()) {
      throw MalformedOutput(std::string(to_string(kind)) + ": neither worker produced usable output (" +
                            record.worker_a_error.get<std::string>() + "; " +
                            record.worker_b_error.get<std::string>() + ")");
    }
  }

  RoleSession integrator(*config.integrator, "integrator", config, base);
  record.integrated_out =
      protocol.integrate(integrator, input, record.worker_a_out, record.worker_b_out, record.trace);
  if (!protocol.single_model) {
    record.agreement = classify_agreement_json(record.worker_a_out, record.worker_b_out, record.integrated_out,
                                               protocol.equivalent);
  }
  record.finished_at = config.clock();
  if (cache) cache->store(record);
  return record;
}

}  // namespace peel
