#include <gtest/gtest.h>

#include <mutex>

#include "peel/ensemble.hpp"
#include "peel/error.hpp"
#include "peel/mock_backend.hpp"
#include "peel/prompts.hpp"
#include "peel/transcript.hpp"
#include "support.hpp"

using namespace peel;
using namespace peel::test;

namespace {

// Backend answering from a function of the request tag.
class FnBackend final : public LlmBackend {
 public:
  using Fn = std::function<std::string(const std::string& prompt, const RequestTag&)>;
  FnBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt, const std::string&, const CompletionParams&,
                       const RequestTag& tag) override {
    {
      std::lock_guard lock(m_);
      ++calls_;
      prompts_.push_back(prompt);
    }
    return fn_(prompt, tag);
  }
  std::string identity() const override { return id_; }
  int calls() const {
    std::lock_guard lock(m_);
    return calls_;
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(m_);
    return prompts_;
  }

 private:
  std::string id_;
  Fn fn_;
  mutable std::mutex m_;
  int calls_ = 0;
  std::vector<std::string> prompts_;
};

std::shared_ptr<FnBackend> constant(const std::string& id, const std::string& reply) {
  return std::make_shared<FnBackend>(id, [reply](const std::string&, const RequestTag&) { return reply; });
}

EnsembleConfig config_with(std::shared_ptr<LlmBackend> a, std::shared_ptr<LlmBackend> b,
                           std::shared_ptr<LlmBackend> i) {
  EnsembleConfig c;
  c.worker_a = std::move(a);
  c.worker_b = std::move(b);
  c.integrator = std::move(i);
  c.sleep = [](std::chrono::milliseconds) {};
  c.clock = fixed_clock("1970-01-01T00:00:00Z");
  return c;
}

// Workers return {"v": ...}; the integrator picks the value of worker A when
// present, otherwise worker B's.
EnsembleProtocol echo_protocol() {
  EnsembleProtocol p;
  p.worker = [](RoleSession& s, const json&) { return s.ask_json("sys", "give v", "{v}", nullptr); };
  p.integrate = [](RoleSession& s, const json&, const json& a, const json& b, json& trace) {
    auto out = s.ask_json("sys", "integrate", "{v}", nullptr, {{"a", a}, {"b", b}});
    trace.push_back(out);
    return out;
  };
  p.equivalent = [](const json& x, const json& y) { return x.at("v") == y.at("v"); };
  return p;
}

}  // namespace

// Exhaustive truth table: workers equal or not, final equal to a, b, or
// neither, with each worker present or absent.
TEST(Agreement, ExhaustiveTruthTable) {
  auto eq = [](int x, int y) { return x == y; };
  int checked = 0;
  for (bool a_present : {true, false}) {
    for (bool b_present : {true, false}) {
      for (bool ab_equal : {true, false}) {
        for (int choice = 0; choice < 3; ++choice) {  // 0 = a, 1 = b, 2 = neither
          const int av = 1;
          const int bv = ab_equal ? 1 : 2;
          const int fv = choice == 0 ? av : choice == 1 ? bv : 3;
          const std::optional<int> a = a_present ? std::optional<int>(av) : std::nullopt;
          const std::optional<int> b = b_present ? std::optional<int>(bv) : std::nullopt;
          const bool fa = a_present && fv == av;
          const bool fb = b_present && fv == bv;
          AgreementOutcome expect = AgreementOutcome::R1;
          if (fa && fb) expect = AgreementOutcome::R3;
          else if (fa) expect = AgreementOutcome::R2MatchesA;
          else if (fb) expect = AgreementOutcome::R2MatchesB;
          EXPECT_EQ(classify_agreement(a, b, fv, eq), expect)
              << a_present << b_present << ab_equal << choice;
          const json ja = a ? json(*a) : json();
          const json jb = b ? json(*b) : json();
          EXPECT_EQ(classify_agreement_json(ja, jb, fv, [](const json& x, const json& y) { return x == y; }), expect);
          ++checked;
        }
      }
    }
  }
  EXPECT_EQ(checked, 24);
}

TEST(Agreement, NonTransitiveEquivalenceFavoursA) {
  // final ~ a and final ~ b but a !~ b.
  auto near = [](int x, int y) { return std::abs(x - y) <= 1; };
  EXPECT_EQ(classify_agreement<int>(0, 2, 1, near), AgreementOutcome::R2MatchesA);
}

TEST(Agreement, StringsRoundTrip) {
  for (auto o : {AgreementOutcome::R1, AgreementOutcome::R2MatchesA, AgreementOutcome::R2MatchesB, AgreementOutcome::R3}) {
    EXPECT_EQ(agreement_from_string(to_string(o)), o);
  }
}

TEST(ExtractJson, ToleratesFencesAndProse) {
  EXPECT_EQ(extract_json_object(R"({"a": 1})"), json({{"a", 1}}));
  EXPECT_EQ(extract_json_object("Sure!\n```json\n{\"a\": {\"b\": \"}\"}}\n```\nDone."),
            json::parse(R"({"a": {"b": "}"}})"));
  EXPECT_FALSE(extract_json_object("no json here"));
  EXPECT_FALSE(extract_json_object("[1, 2]"));
}

TEST(Retry, TransientFailuresAreRetriedWithBackoff) {
  int failures = 2;
  FnBackend b("m", [&](const std::string&, const RequestTag&) -> std::string {
    if (failures-- > 0) throw TransientBackendError("429");
    return "ok";
  });
  std::vector<std::chrono::milliseconds> sleeps;
  RetryPolicy policy;
  policy.base_delay = std::chrono::milliseconds(100);
  const auto reply = complete_with_retry(b, "p", "s", {}, {}, policy,
                                         [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  EXPECT_EQ(reply, "ok");
  EXPECT_EQ(b.calls(), 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(100), std::chrono::milliseconds(200)}));
}

TEST(Retry, GivesUpAfterLimit) {
  FnBackend b("m", [](const std::string&, const RequestTag&) -> std::string { throw TransientBackendError("503"); });
  RetryPolicy policy;
  policy.retry_limit = 3;
  EXPECT_THROW(complete_with_retry(b, "p", "s", {}, {}, policy, nullptr), BackendError);
  EXPECT_EQ(b.calls(), 4);
}

TEST(Retry, NonTransientPropagatesImmediately) {
  FnBackend b("m", [](const std::string&, const RequestTag&) -> std::string { throw BackendError("401"); });
  EXPECT_THROW(complete_with_retry(b, "p", "s", {}, {}, RetryPolicy{}, nullptr), BackendError);
  EXPECT_EQ(b.calls(), 1);
}

TEST(Retry, DelayIsCapped) {
  RetryPolicy p;
  p.base_delay = std::chrono::milliseconds(1000);
  p.max_delay = std::chrono::milliseconds(5000);
  EXPECT_EQ(p.delay_for(0).count(), 1000);
  EXPECT_EQ(p.delay_for(2).count(), 4000);
  EXPECT_EQ(p.delay_for(10).count(), 5000);
}

TEST(Ensemble, AllAgree) {
  auto cfg = config_with(constant("a", R"({"v": 1})"), constant("b", R"({"v": 1})"), constant("i", R"({"v": 1})"));
  const auto rec = run_ensemble_task(TaskKind::Disagree, {{"x", 1}}, cfg, echo_protocol());
  EXPECT_EQ(rec.agreement, AgreementOutcome::R3);
  EXPECT_EQ(rec.integrated_out, json({{"v", 1}}));
  EXPECT_EQ(rec.trace.size(), 1u);
  EXPECT_EQ(rec.started_at, "1970-01-01T00:00:00Z");
  EXPECT_EQ(rec.models, json({{"worker_a", "a"}, {"worker_b", "b"}, {"integrator", "i"}}));
}

TEST(Ensemble, OutcomesFromWorkerAndIntegratorReplies) {
  struct Case {
    int a, b, f;
    AgreementOutcome expect;
  };
  for (const auto& c : {Case{1, 2, 1, AgreementOutcome::R2MatchesA}, Case{1, 2, 2, AgreementOutcome::R2MatchesB},
                        Case{1, 2, 3, AgreementOutcome::R1}, Case{1, 1, 3, AgreementOutcome::R1}}) {
    auto cfg = config_with(constant("a", "{\"v\": " + std::to_string(c.a) + "}"),
                           constant("b", "{\"v\": " + std::to_string(c.b) + "}"),
                           constant("i", "{\"v\": " + std::to_string(c.f) + "}"));
    EXPECT_EQ(run_ensemble_task(TaskKind::Disagree, json::object(), cfg, echo_protocol()).agreement, c.expect);
  }
}

TEST(Ensemble, RepairLoopReasksWithProblem) {
  int n = 0;
  auto a = std::make_shared<FnBackend>("a", [&](const std::string&, const RequestTag& tag) -> std::string {
    ++n;
    return tag.attempt < 2 ? "not json" : R"({"v": 1})";
  });
  auto cfg = config_with(a, constant("b", R"({"v": 1})"), constant("i", R"({"v": 1})"));
  const auto rec = run_ensemble_task(TaskKind::Disagree, json::object(), cfg, echo_protocol());
  EXPECT_EQ(n, 3);  // first ask plus two schema re-asks
  EXPECT_EQ(rec.agreement, AgreementOutcome::R3);
  const auto prompts = a->prompts();
  EXPECT_NE(prompts.back().find("not a JSON object"), std::string::npos);
}

TEST(Ensemble, WorkerNeverConformingIsAbsent) {
  auto a = constant("a", "garbage");
  auto cfg = config_with(a, constant("b", R"({"v": 2})"), constant("i", R"({"v": 2})"));
  const auto rec = run_ensemble_task(TaskKind::Disagree, json::object(), cfg, echo_protocol());
  EXPECT_TRUE(rec.worker_a_out.is_null());
  EXPECT_TRUE(rec.worker_a_error.is_string());
  EXPECT_EQ(a->calls(), 1 + kSchemaReasks);
  EXPECT_EQ(rec.agreement, AgreementOutcome::R2MatchesB);
}

TEST(Ensemble, BothWorkersAbsentIsMalformed) {
  auto cfg = config_with(constant("a", "x"), constant("b", "y"), constant("i", R"({"v": 2})"));
  EXPECT_THROW(run_ensemble_task(TaskKind::Disagree, json::object(), cfg, echo_protocol()), MalformedOutput);
}

TEST(Ensemble, StructuralProblemsGetOneReask) {
  auto a = constant("a", R"({"v": 1})");
  auto cfg = config_with(a, constant("b", R"({"v": 1})"), constant("i", R"({"v": 1})"));
  auto proto = echo_protocol();
  proto.worker = [](RoleSession& s, const json&) {
    return s.ask_json("sys", "u", "{v}", [](const json&) { return PayloadCheck::structural("V3 cycle"); });
  };
  EXPECT_THROW(run_ensemble_task(TaskKind::Disagree, json::object(), cfg, proto), MalformedOutput);
  EXPECT_EQ(a->calls(), 1 + kStructuralReasks);
}

TEST(Ensemble, SameWorkerIdentityRejected) {
  auto cfg = config_with(constant("same", "{}"), constant("same", "{}"), constant("i", "{}"));
  EXPECT_THROW(run_ensemble_task(TaskKind::Disagree, json::object(), cfg, echo_protocol()), UsageError);
  cfg.worker_b = nullptr;
  EXPECT_THROW(cfg.check(), UsageError);
}

TEST(Ensemble, SingleModelUsesIntegratorOnly) {
  auto a = constant("a", "{}");
  auto cfg = config_with(a, constant("b", "{}"), constant("i", R"({"v": 5})"));
  auto proto = echo_protocol();
  proto.single_model = true;
  const auto rec = run_ensemble_task(TaskKind::Segment, json::object(), cfg, proto);
  EXPECT_EQ(a->calls(), 0);
  EXPECT_FALSE(rec.agreement);
}

TEST(Ensemble, CacheHitMakesNoCalls) {
  TempDir dir;
  auto a = constant("a", R"({"v": 1})");
  auto cfg = config_with(a, constant("b", R"({"v": 1})"), constant("i", R"({"v": 1})"));
  cfg.cache_dir = dir.path();
  const auto first = run_ensemble_task(TaskKind::Disagree, {{"k", 1}}, cfg, echo_protocol());
  EXPECT_FALSE(first.from_cache);
  const int calls = a->calls();
  const auto second = run_ensemble_task(TaskKind::Disagree, {{"k", 1}}, cfg, echo_protocol());
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(a->calls(), calls);
  EXPECT_EQ(to_json(second), to_json(first));
  EXPECT_TRUE(std::filesystem::exists(TaskCache(dir.path()).path_for(TaskKind::Disagree, first.input_hash)));
  // A different input misses.
  run_ensemble_task(TaskKind::Disagree, {{"k", 2}}, cfg, echo_protocol());
  EXPECT_GT(a->calls(), calls);
}

TEST(Ensemble, CorruptCacheEntryIsAMiss) {
  TempDir dir;
  TaskCache cache(dir.path());
  const auto path = cache.path_for(TaskKind::Extract, "abc");
  std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, "{not json");
  EXPECT_FALSE(cache.load(TaskKind::Extract, "abc"));
}

TEST(Ensemble, RecordJsonRoundTrip) {
  auto cfg = config_with(constant("a", R"({"v": 1})"), constant("b", R"({"v": 2})"), constant("i", R"({"v": 2})"));
  const auto rec = run_ensemble_task(TaskKind::Extract, {{"k", 1}}, cfg, echo_protocol());
  EXPECT_EQ(to_json(record_from_json(to_json(rec))), to_json(rec));
}

TEST(InputHash, PureAndSensitive) {
  const json models = {{"worker_a", "a"}};
  const auto h = task_input_hash(TaskKind::Extract, "v1:abc", models, {{"x", 1}, {"y", 2}});
  EXPECT_EQ(h, task_input_hash(TaskKind::Extract, "v1:abc", models, json::parse(R"({"y":2,"x":1})")));
  EXPECT_NE(h, task_input_hash(TaskKind::Summarize, "v1:abc", models, {{"x", 1}, {"y", 2}}));
  EXPECT_NE(h, task_input_hash(TaskKind::Extract, "v1:abd", models, {{"x", 1}, {"y", 2}}));
  EXPECT_NE(h, task_input_hash(TaskKind::Extract, "v1:abc", {{"worker_a", "b"}}, {{"x", 1}, {"y", 2}}));
  EXPECT_NE(h, task_input_hash(TaskKind::Extract, "v1:abc", models, {{"x", 1}, {"y", 3}}));
}

TEST(Clock, FormatUtc) {
  EXPECT_EQ(format_utc(0), "1970-01-01T00:00:00Z");
  EXPECT_EQ(format_utc(1700000000), "2023-11-14T22:13:20Z");
  EXPECT_EQ(fixed_clock("t")(), "t");
}

// --- prompts -------------------------------------------------------------------

TEST(Prompts, BuiltinRenderAndVersions) {
  const auto p = PromptSet::builtin();
  EXPECT_TRUE(p.has("common.repair"));
  EXPECT_THROW(p.get("no.such.template"), UsageError);
  EXPECT_THROW(p.render("common.repair", {}), UsageError);
  const auto v = p.version_for("extract");
  EXPECT_EQ(v.rfind(p.label() + ":", 0), 0u);
  EXPECT_EQ(v.size(), p.label().size() + 1 + 12);
  EXPECT_NE(v, p.version_for("classify"));
}

TEST(Prompts, EditingAFamilyChangesOnlyThatVersion) {
  TempDir dir;
  const auto base = PromptSet::builtin();
  const auto root = dir / "v1";
  std::filesystem::create_directories(root);
  for (const auto& [name, text] : base.templates()) write_file_atomic(root / (name + ".txt"), text);
  const auto same = PromptSet::from_directory(root);
  EXPECT_EQ(same.version_for("extract"), base.version_for("extract"));
  const std::string name = "extract.system";
  ASSERT_TRUE(same.has(name));
  write_file_atomic(root / (name + ".txt"), same.get(name) + "\nBe brief.");
  const auto edited = PromptSet::from_directory(root);
  EXPECT_NE(edited.version_for("extract"), base.version_for("extract"));
  EXPECT_EQ(edited.version_for("classify"), base.version_for("classify"));
}

// --- mock backend ---------------------------------------------------------------

TEST(MockBackend, ScriptSelectorsAndOrder) {
  auto script = std::make_shared<MockScript>(MockScript::from_json(json::parse(R"({
    "strict": true,
    "responses": [
      {"task": "extract", "role": "worker_a", "step": 0, "response": "first"},
      {"task": "extract", "input": {"who": "x"}, "response": {"k": 1}},
      {"task": "extract", "contains": "needle", "response": "third"}
    ]})")));
  MockBackend m("mock-a", script, 0);
  RequestTag t;
  t.task_kind = "extract";
  t.role = "worker_a";
  EXPECT_EQ(m.complete("p", "s", {}, t), "first");
  t.role = "worker_b";
  t.input = {{"who", "x"}, {"other", 1}};
  EXPECT_EQ(json::parse(m.complete("p", "s", {}, t)), json({{"k", 1}}));
  t.input = {{"who", "y"}};
  EXPECT_EQ(m.complete("has needle", "s", {}, t), "third");
  EXPECT_THROW(m.complete("nothing", "s", {}, t), BackendError);
  EXPECT_EQ(m.call_count(), 4u);
}

TEST(MockBackend, TransientFailuresSharedAcrossInstances) {
  auto script = std::make_shared<MockScript>(MockScript::from_json(json::parse(R"({
    "responses": [{"task": "segment", "transient_failures": 2, "response": "ok"}]})")));
  MockBackend a("a", script, 0), b("b", script, 0);
  RequestTag t;
  t.task_kind = "segment";
  EXPECT_THROW(a.complete("p", "s", {}, t), TransientBackendError);
  EXPECT_THROW(b.complete("p", "s", {}, t), TransientBackendError);
  EXPECT_EQ(a.complete("p", "s", {}, t), "ok");
}

TEST(MockBackend, SyntheticRepliesDeterministic) {
  RequestTag t;
  t.task_kind = "segment";
  t.role = "integrator";
  t.input = to_json(parse_transcript("A: hi\nB: yo\n", "e"));
  EXPECT_EQ(synthesize_mock_reply("m", 1, t), synthesize_mock_reply("m", 1, t));
  auto script = std::make_shared<MockScript>(MockScript::load(fixture("empty.mock")));
  MockBackend m("m", script, 1);
  EXPECT_EQ(m.complete("p", "s", {}, t), synthesize_mock_reply("m", 1, t));
}

TEST(JsonSubset, Semantics) {
  EXPECT_TRUE(json_subset(json(), json()));
  EXPECT_FALSE(json_subset(json(), {{"a", 1}}));  // an absent selector is skipped by the matcher instead
  EXPECT_TRUE(json_subset(json::object(), {{"a", 1}}));
  EXPECT_TRUE(json_subset({{"a", {{"b", 1}}}}, {{"a", {{"b", 1}, {"c", 2}}}, {"d", 3}}));
  EXPECT_FALSE(json_subset({{"a", 2}}, {{"a", 1}}));
  EXPECT_FALSE(json_subset({{"z", 1}}, {{"a", 1}}));
  EXPECT_FALSE(json_subset({{"a", json::array({1})}}, {{"a", json::array({1, 2})}}));
}
