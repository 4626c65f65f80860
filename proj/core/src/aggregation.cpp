#include "peel/aggregation.hpp"

#include <cstdio>

#include "peel/csv.hpp"
#include "peel/fsutil.hpp"
#include "peel/relation.hpp"
#include "peel/text.hpp"

namespace peel {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ConflictMap
// ---------------------------------------------------------------------------

const CausalQuestion* ConflictMap::find_id(std::string_view id) const {
  for (const auto& q : questions_) {
    if (q.question_id == id) return &q;
  }
  return nullptr;
}

const CausalQuestion* ConflictMap::find_text(std::string_view text) const {
  const std::string key = normalize_label(text);
  for (const auto& q : questions_) {
    if (normalize_label(q.text) == key) return &q;
  }
  return nullptr;
}

const CausalQuestion& ConflictMap::add(const std::string& text, const std::array<std::string, 2>& stances) {
  if (const auto* existing = find_text(text)) return *existing;
  const std::string clean(trim(text));
  if (clean.empty()) throw MalformedOutput("empty causal question");
  if (normalize_label(stances[0]).empty() || normalize_label(stances[0]) == normalize_label(stances[1])) {
    throw MalformedOutput("causal question '" + clean + "' needs two distinct stances");
  }
  char id[16];
  std::snprintf(id, sizeof id, "Q%03zu", questions_.size() + 1);
  ++revision_;
  questions_.push_back({id, clean, {std::string(trim(stances[0])), std::string(trim(stances[1]))}, revision_, {}});
  return questions_.back();
}

void ConflictMap::record(QuestionAssignment assignment) {
  if (!find_id(assignment.question_id)) {
    throw SchemaError("assignment " + assignment.divergence_key + " names unknown question " + assignment.question_id);
  }
  assignments_.push_back(std::move(assignment));
}

json ConflictMap::to_json() const {
  json qs = json::array();
  for (const auto& q : questions_) {
    qs.push_back({{"question_id", q.question_id},
                  {"text", q.text},
                  {"stances", q.stances},
                  {"origin", "model_created"},
                  {"revision_added", q.revision_added},
                  {"theme", q.theme ? json(*q.theme) : json()}});
  }
  json as = json::array();
  for (const auto& a : assignments_) {
    as.push_back({{"divergence_key", a.divergence_key},
                  {"question_id", a.question_id},
                  {"boomer_stance", a.boomer_stance},
                  {"doomer_stance", a.doomer_stance},
                  {"map_revision", a.map_revision},
                  {"created_question", a.created_question},
                  {"agreement", to_string(a.agreement)},
                  {"votes", a.votes}});
  }
  std::size_t three_way = 0;
  for (const auto& a : assignments_) three_way += a.agreement == AgreementOutcome::R3;
  return {{"revision", revision_},
          {"questions", qs},
          {"assignments", as},
          {"tallies", {{"assignments", assignments_.size()}, {"three_way", three_way}}}};
}

ConflictMap ConflictMap::from_json(const json& doc) {
  try {
    ConflictMap m;
    for (const auto& q : doc.at("questions")) {
      CausalQuestion cq;
      cq.question_id = q.at("question_id").get<std::string>();
      cq.text = q.at("text").get<std::string>();
      const auto& st = q.at("stances");
      if (!st.is_array() || st.size() != 2) throw SchemaError("question " + cq.question_id + " needs two stances");
      cq.stances = {st[0].get<std::string>(), st[1].get<std::string>()};
      cq.revision_added = q.value("revision_added", 0);
      if (q.value("theme", json()).is_string()) cq.theme = q.at("theme").get<std::string>();
      if (m.find_id(cq.question_id) || m.find_text(cq.text)) throw SchemaError("duplicate question " + cq.question_id);
      m.questions_.push_back(std::move(cq));
    }
    m.revision_ = doc.at("revision").get<int>();
    for (const auto& a : doc.at("assignments")) {
      QuestionAssignment qa;
      qa.divergence_key = a.at("divergence_key").get<std::string>();
      qa.question_id = a.at("question_id").get<std::string>();
      qa.boomer_stance = a.at("boomer_stance").get<std::string>();
      qa.doomer_stance = a.at("doomer_stance").get<std::string>();
      qa.map_revision = a.value("map_revision", 0);
      qa.created_question = a.value("created_question", false);
      const auto ag = agreement_from_string(a.at("agreement").get<std::string>());
      if (!ag) throw SchemaError("assignment " + qa.divergence_key + ": bad agreement");
      qa.agreement = *ag;
      qa.votes = a.value("votes", json());
      m.record(std::move(qa));
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("conflict map: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

namespace {

std::string node_text(const ReasoningChain& chain, RefLabel ref) {
  if (const Premise* p = chain.find_premise(ref)) return p->text;
  if (const Relationship* r = chain.find_relationship(ref)) {
    return r->gloss ? *r->gloss : serialize_relation(*r);
  }
  return ref.str();
}

// Resolves a vote against the questions the model was shown.
json normalize_vote(const json& raw, const json& listed) {
  json out = {{"question_id", nullptr}, {"new_question", nullptr},
              {"boomer_stance", std::string(trim(raw.at("boomer_stance").get<std::string>()))},
              {"doomer_stance", std::string(trim(raw.at("doomer_stance").get<std::string>()))}};
  const json& qid = raw.value("question_id", json());
  if (qid.is_string()) {
    out["question_id"] = qid;
    return out;
  }
  const json& nq = raw.at("new_question");
  const std::string text(trim(nq.at("text").get<std::string>()));
  for (const auto& q : listed) {
    if (normalize_label(q.at("text").get<std::string>()) == normalize_label(text)) {
      out["question_id"] = q.at("question_id");
      return out;
    }
  }
  out["new_question"] = {{"text", text}, {"stances", nq.at("stances")}};
  return out;
}

std::string question_key(const json& vote) {
  if (vote.at("question_id").is_string()) return vote.at("question_id").get<std::string>();
  return "new:" + normalize_label(vote.at("new_question").at("text").get<std::string>());
}

PayloadCheck check_vote(const json& p, const json& listed) {
  for (const char* k : {"boomer_stance", "doomer_stance"}) {
    auto it = p.find(k);
    if (it == p.end() || !it->is_string()) return PayloadCheck::schema(std::string("expected a string '") + k + "'");
  }
  const json& qid = p.value("question_id", json());
  std::vector<std::string> stances;
  if (qid.is_string()) {
    const json* q = nullptr;
    for (const auto& item : listed) {
      if (item.at("question_id") == qid) q = &item;
    }
    if (!q) return PayloadCheck::schema("question_id " + qid.get<std::string>() + " is not on the list");
    for (const auto& s : q->at("stances")) stances.push_back(s.get<std::string>());
  } else {
    const json& nq = p.value("new_question", json());
    if (!nq.is_object() || !nq.contains("text") || !nq.at("text").is_string() ||
        trim(nq.at("text").get<std::string>()).empty()) {
      return PayloadCheck::schema("give either a listed question_id or a new_question with text");
    }
    const json& st = nq.value("stances", json());
    if (!st.is_array() || st.size() != 2 || !st[0].is_string() || !st[1].is_string() ||
        normalize_label(st[0].get<std::string>()) == normalize_label(st[1].get<std::string>())) {
      return PayloadCheck::schema("new_question needs exactly two distinct stances");
    }
    // A new question repeating a listed one adopts the listed stances.
    for (const auto& item : listed) {
      if (normalize_label(item.at("text").get<std::string>()) == normalize_label(nq.at("text").get<std::string>())) {
        for (const auto& s : item.at("stances")) stances.push_back(s.get<std::string>());
      }
    }
    if (stances.empty()) stances = {st[0].get<std::string>(), st[1].get<std::string>()};
  }
  auto known = [&](const std::string& s) {
    for (const auto& x : stances) {
      if (normalize_label(x) == normalize_label(s)) return true;
    }
    return false;
  };
  if (!known(p.at("boomer_stance").get<std::string>()) || !known(p.at("doomer_stance").get<std::string>())) {
    return PayloadCheck::schema("boomer_stance and doomer_stance must be stances of the chosen question");
  }
  return PayloadCheck::ok();
}

}  // namespace

DivergenceInput root_divergence_input(const DisagreementReport& report, const ReasoningChain& boomer,
                                      const ReasoningChain& doomer) {
  const Divergence* root = report.root_divergence();
  if (!root) throw EmptyInput("report " + report.pair.pair_key() + " has no root divergence");
  return {report.pair.topic_id + "/" + report.pair.pair_key() + "/" + root->id, *root,
          node_text(boomer, root->boomer_ref), node_text(doomer, root->doomer_ref)};
}

AssignmentResult classify_divergence(const DivergenceInput& in, ConflictMap& map, const EnsembleConfig& config) {
  if (in.divergence.dtype != PremiseType::Causal) {
    throw NotCausal("divergence " + in.key + " is " + std::string(to_string(in.divergence.dtype)) + ", not causal");
  }
  json listed = json::array();
  std::string numbered;
  for (const auto& q : map.questions()) {
    listed.push_back({{"question_id", q.question_id}, {"text", q.text}, {"stances", q.stances}});
    numbered += q.question_id + ": " + q.text + "  [stances: \"" + q.stances[0] + "\" vs \"" + q.stances[1] + "\"]\n";
  }
  if (numbered.empty()) numbered = "(the list is empty)\n";
  const json input = {{"divergence",
                       {{"key", in.key},
                        {"boomer_ref", in.divergence.boomer_ref.str()},
                        {"doomer_ref", in.divergence.doomer_ref.str()},
                        {"boomer_premise", in.boomer_text},
                        {"doomer_premise", in.doomer_text},
                        {"rationale", in.divergence.rationale}}},
                      {"map_revision", map.revision()},
                      {"questions", listed}};
  const std::string schema = config.prompts.get("aggregate.schema");
  const std::map<std::string, std::string> vars = {{"revision", std::to_string(map.revision())},
                                                   {"questions", numbered},
                                                   {"boomer_premise", in.boomer_text},
                                                   {"doomer_premise", in.doomer_text},
                                                   {"rationale", in.divergence.rationale},
                                                   {"schema", schema}};
  const PayloadChecker check = [&](const json& p) { return check_vote(p, listed); };

  EnsembleProtocol protocol;
  protocol.equivalent = [](const json& a, const json& b) { return question_key(a) == question_key(b); };
  protocol.worker = [&](RoleSession& s, const json&) {
    return normalize_vote(s.ask_json(config.prompts.get("aggregate.worker.system"),
                                     config.prompts.render("aggregate.worker.user", vars), schema, check),
                          listed);
  };
  protocol.integrate = [&](RoleSession& s, const json&, const json& a, const json& b, json&) {
    auto show = [](const json& v) { return v.is_null() ? std::string("(no usable output)") : v.dump(); };
    auto ivars = vars;
    ivars["vote_a"] = show(a);
    ivars["vote_b"] = show(b);
    return normalize_vote(s.ask_json(config.prompts.get("aggregate.integrator.system"),
                                     config.prompts.render("aggregate.integrator.user", ivars), schema, check,
                                     {{"worker_a", a}, {"worker_b", b}}),
                          listed);
  };

  AssignmentResult result;
  result.record = run_ensemble_task(TaskKind::AggregateClassify, input, config, protocol);
  const json& fin = result.record.integrated_out;
  QuestionAssignment& qa = result.assignment;
  qa.divergence_key = in.key;
  qa.map_revision = map.revision();
  if (fin.at("question_id").is_string()) {
    qa.question_id = fin.at("question_id").get<std::string>();
  } else {
    const json& nq = fin.at("new_question");
    const auto& added =
        map.add(nq.at("text").get<std::string>(),
                {nq.at("stances").at(0).get<std::string>(), nq.at("stances").at(1).get<std::string>()});
    qa.question_id = added.question_id;
    qa.created_question = map.revision() == qa.map_revision + 1;
  }
  // Stances are stored with the question's own spelling.
  const CausalQuestion* q = map.find_id(qa.question_id);
  auto canonical = [&](const std::string& s) {
    for (const auto& x : q->stances) {
      if (normalize_label(x) == normalize_label(s)) return x;
    }
    return s;
  };
  qa.boomer_stance = canonical(fin.at("boomer_stance").get<std::string>());
  qa.doomer_stance = canonical(fin.at("doomer_stance").get<std::string>());
  qa.agreement = result.record.agreement.value_or(AgreementOutcome::R3);
  qa.votes = {{"worker_a", result.record.worker_a_out},
              {"worker_b", result.record.worker_b_out},
              {"integrator", fin}};
  map.record(qa);
  return result;
}

double consistency_rate(const ConflictMap& map) {
  if (map.assignments().empty()) throw EmptyInput("conflict map has no assignments");
  std::size_t agreed = 0;
  for (const auto& a : map.assignments()) agreed += a.agreement == AgreementOutcome::R3;
  return static_cast<double>(agreed) / static_cast<double>(map.assignments().size());
}

// ---------------------------------------------------------------------------
// Themes
// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_theme_csv(std::string_view text) {
  std::map<std::string, std::string> out;
  const auto rows = parse_csv(text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.empty() || (row.size() == 1 && trim(row[0]).empty())) continue;
    if (i == 0 && row.size() >= 2 && to_lower(trim(row[0])) == "question_id") continue;
    if (row.size() != 2) throw FormatError(i + 1, "theme file rows need exactly two columns");
    const std::string id(trim(row[0]));
    const std::string theme(trim(row[1]));
    if (id.empty() || theme.empty()) throw FormatError(i + 1, "empty question id or theme");
    if (!out.emplace(id, theme).second) throw FormatError(i + 1, "question " + id + " mapped twice");
  }
  return out;
}

std::map<std::string, std::string> load_theme_file(const std::filesystem::path& path) {
  return parse_theme_csv(read_file(path));
}

ThemeReport theme_report(const ConflictMap& map, const std::map<std::string, std::string>& themes) {
  for (const auto& q : map.questions()) {
    if (!themes.count(q.question_id)) throw UnmappedQuestion(q.question_id);
  }
  ThemeReport r;
  for (const auto& a : map.assignments()) {
    ++r.counts[themes.at(a.question_id)];
    ++r.assignments;
  }
  for (const auto& [theme, count] : r.counts) {
    r.shares[theme] = static_cast<double>(count) / static_cast<double>(r.assignments);
  }
  return r;
}

json to_json(const ThemeReport& r) {
  json themes = json::array();
  for (const auto& [theme, count] : r.counts) {
    themes.push_back({{"theme", theme}, {"count", count}, {"share", r.shares.at(theme)}});
  }
  return {{"assignments", r.assignments}, {"themes", themes}};
}

std::string theme_report_csv(const ThemeReport& r) {
  std::string out = csv_row({"theme", "count", "share"});
  for (const auto& [theme, count] : r.counts) {
    char share[32];
    std::snprintf(share, sizeof share, "%.6f", r.shares.at(theme));
    out += csv_row({theme, std::to_string(count), share});
  }
  return out;
}

}  // namespace peel
