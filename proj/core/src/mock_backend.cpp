#include "peel/mock_backend.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "peel/chain.hpp"
#include "peel/digest.hpp"
#include "peel/text.hpp"

namespace peel {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Script
// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::optional<T> opt_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

MockScript MockScript::from_json(const json& doc) {
  MockScript script;
  const json* list = &doc;
  if (doc.is_object()) {
    script.strict = doc.value("strict", false);
    auto it = doc.find("responses");
    if (it == doc.end()) throw SchemaError("mock script: missing 'responses'");
    list = &*it;
  }
  if (!list->is_array()) throw SchemaError("mock script: 'responses' must be an array");
  for (const auto& item : *list) {
    if (!item.is_object() || !item.contains("response")) {
      throw SchemaError("mock script: every entry needs a 'response'");
    }
    MockScriptEntry e;
    e.task = opt_field<std::string>(item, "task");
    e.role = opt_field<std::string>(item, "role");
    e.step = opt_field<int>(item, "step");
    e.attempt = opt_field<int>(item, "attempt");
    e.model = opt_field<std::string>(item, "model");
    e.input_hash = opt_field<std::string>(item, "input_hash");
    e.contains = opt_field<std::string>(item, "contains");
    e.input = item.value("input", json());
    const json& r = item.at("response");
    e.response = r.is_string() ? r.get<std::string>() : r.dump();
    e.transient_failures = item.value("transient_failures", 0);
    script.entries.push_back(std::move(e));
  }
  script.failures_served.assign(script.entries.size(), 0);
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open mock script " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("mock script " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

bool json_subset(const json& subset, const json& doc) {
  if (subset.is_object()) {
    if (!doc.is_object()) return false;
    for (const auto& [key, value] : subset.items()) {
      auto it = doc.find(key);
      if (it == doc.end() || !json_subset(value, *it)) return false;
    }
    return true;
  }
  return subset == doc;
}

namespace {

bool matches(const MockScriptEntry& e, const std::string& model, const std::string& prompt,
             const RequestTag& tag) {
  if (e.task && *e.task != tag.task_kind) return false;
  if (e.role && *e.role != tag.role) return false;
  if (e.step && *e.step != tag.step) return false;
  if (e.attempt && *e.attempt != tag.attempt) return false;
  if (e.model && *e.model != model) return false;
  if (e.input_hash && *e.input_hash != tag.input_hash) return false;
  if (e.contains && prompt.find(*e.contains) == std::string::npos) return false;
  if (!e.input.is_null() && !json_subset(e.input, tag.input)) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Backend
// ---------------------------------------------------------------------------

MockBackend::MockBackend(std::string identity, std::shared_ptr<MockScript> script, std::uint64_t seed)
    : identity_(std::move(identity)), script_(std::move(script)), seed_(seed) {
  if (!script_) script_ = std::make_shared<MockScript>();
  if (script_->failures_served.size() != script_->entries.size()) {
    script_->failures_served.assign(script_->entries.size(), 0);
  }
}

std::string MockBackend::complete(const std::string& prompt, const std::string&, const CompletionParams&,
                                  const RequestTag& tag) {
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < script_->entries.size(); ++i) {
    if (matches(script_->entries[i], identity_, prompt, tag)) {
      hit = i;
      break;
    }
  }
  {
    std::lock_guard lk(mutex_);
    calls_.push_back({identity_, tag, hit.has_value()});
  }
  if (hit) {
    const auto& entry = script_->entries[*hit];
    {
      std::lock_guard lk(*script_->lock);
      int& served = script_->failures_served[*hit];
      if (served < entry.transient_failures) {
        ++served;
        throw TransientBackendError(identity_ + ": simulated transient failure " + std::to_string(served) +
                                    "/" + std::to_string(entry.transient_failures));
      }
    }
    return entry.response;
  }
  if (script_->strict) {
    throw BackendError(identity_ + ": no scripted response for " + tag.task_kind + "/" + tag.role +
                       " step " + std::to_string(tag.step) + " attempt " + std::to_string(tag.attempt));
  }
  return synthesize_mock_reply(identity_, seed_, tag);
}

std::vector<MockCall> MockBackend::calls() const {
  std::lock_guard lk(mutex_);
  return calls_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lk(mutex_);
  return calls_.size();
}

// ---------------------------------------------------------------------------
// Synthetic replies
// ---------------------------------------------------------------------------

namespace {

// Stable 64-bit value from the request identity; drives worker B's deviations.
std::uint64_t request_hash(const std::string& model, std::uint64_t seed, const RequestTag& tag) {
  const std::string h = sha256_hex(model + "|" + std::to_string(seed) + "|" + tag.task_kind + "|" +
                                   canonical_json(tag.input));
  return std::stoull(h.substr(0, 15), nullptr, 16);
}

bool has_word(const std::string& lower, std::string_view word) {
  std::size_t pos = 0;
  while ((pos = lower.find(word, pos)) != std::string::npos) {
    const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right = end >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]));
    if (left && right) return true;
    pos = end;
  }
  return false;
}

bool mentions_ai(const std::string& text) {
  const std::string l = to_lower(text);
  if (has_word(l, "ai") || has_word(l, "agi")) return true;
  return contains_any(l, {"artificial", "intelligen", "machine", "model", "robot", "algorithm", "automat",
                          "technolog", "chatbot", "computer"});
}

std::string first_words(const std::string& text, std::size_t n) {
  std::string out;
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size() && count < n;) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    if (!out.empty()) out += ' ';
    out.append(text, start, i - start);
    ++count;
  }
  return out;
}

json synth_segment(const RequestTag& tag) {
  const json& turns = tag.input.at("turns");
  const int n = static_cast<int>(turns.size());
  json segments = json::array();
  constexpr int kChunk = 6;
  for (int start = 1; start <= n;) {
    int end = std::min(n, start + kChunk - 1);
    if (n - end < 3) end = n;
    const std::string opener = turns.at(start - 1).value("text", "");
    segments.push_back({{"summary", "Discussion opening with: " + first_words(opener, 8)},
                        {"start_turn", start},
                        {"end_turn", end}});
    start = end + 1;
  }
  return {{"segments", segments}};
}

json synth_summarize(const RequestTag& tag, bool deviate) {
  if (tag.role == "integrator") {
    const json& a = tag.context.value("worker_a", json());
    const json& b = tag.context.value("worker_b", json());
    const std::string sa = a.is_object() ? a.value("summary", "") : "";
    const std::string sb = b.is_object() ? b.value("summary", "") : "";
    return {{"summary", !sa.empty() ? sa : sb}};
  }
  const std::string speaker = tag.input.at("speaker").get<std::string>();
  const std::size_t pos = tag.context.value("segment_position", std::size_t{0});
  const json& segs = tag.input.at("segments");
  std::vector<std::string> kept;
  if (pos < segs.size()) {
    for (const auto& turn : segs[pos].at("turns")) {
      if (turn.value("speaker", "") != speaker) continue;
      for (auto& sentence : split_sentences(turn.value("text", ""))) {
        if (mentions_ai(sentence)) kept.push_back(std::move(sentence));
      }
    }
  }
  if (deviate && kept.size() > 1) kept.pop_back();
  std::string summary;
  for (const auto& s : kept) {
    if (!summary.empty()) summary += ' ';
    summary += s;
  }
  return {{"summary", summary}};
}

PremiseType guess_type(const std::string& sentence) {
  const std::string l = to_lower(sentence);
  if (contains_any(l, {" is defined as", " means ", " refers to", "by definition"})) return PremiseType::Definitional;
  if (contains_any(l, {"because", "cause", "lead to", "leads to", "result in", "results in", "prevent", "makes ",
                       "drives ", "enable"})) {
    return PremiseType::Causal;
  }
  if (contains_any(l, {"should", "must", "ought", " good", " bad", "wrong", "unacceptable", "desirable",
                       "responsib", "worth"})) {
    return PremiseType::Moral;
  }
  if (contains_any(l, {"will ", "going to", "soon", "future", "eventually", "within "})) return PremiseType::Forecast;
  return PremiseType::Factual;
}

int attitude_score(const std::string& text) {
  const std::string l = to_lower(text);
  int score = 0;
  for (const char* w : {"benefit", "safe", "controllable", "can be controlled", "manageable", "opportunit",
                        "help", "improve", "prosper", "overblown", "no threat", "not a threat", "augment",
                        "new jobs", "under control", "not dangerous", "won't", "will not"}) {
    if (l.find(w) != std::string::npos) score += 2;
  }
  for (const char* w : {"danger", "threat", "catastroph", "extinct", "lose control", "uncontrollable",
                        "cannot be controlled", "destroy", "harm", "replace", "unemploy", "wipe", "doom",
                        "unsafe", "kill", "impossible", "risk"}) {
    if (l.find(w) != std::string::npos) score -= 1;
  }
  return score;
}

json synth_chain(const std::string& summary, bool deviate) {
  std::vector<std::string> sentences = split_sentences(summary);
  if (sentences.empty()) return json::array();
  const std::string conclusion = sentences.back();
  if (sentences.size() > 1) sentences.pop_back();
  if (sentences.size() > 8) sentences.resize(8);

  json premises = json::array();
  std::vector<std::string> plain, moral;
  std::uint32_t next = 1;
  bool flipped = false;
  for (const auto& s : sentences) {
    PremiseType t = guess_type(s);
    if (deviate && !flipped && t == PremiseType::Forecast) {
      t = PremiseType::Factual;
      flipped = true;
    }
    const std::string id = "P" + std::to_string(next++);
    premises.push_back({{"id", id}, {"text", s}, {"type", std::string(to_string(t))},
                        {"explicitness", "explicit"}, {"confidence", 90}});
    (t == PremiseType::Moral ? moral : plain).push_back(id);
  }
  if (moral.empty()) {
    // Value premise the argument leans on without saying it.
    const std::string id = "P" + std::to_string(next++);
    const bool hopeful = attitude_score(conclusion) > 0;
    premises.push_back({{"id", id},
                        {"text", hopeful ? "Outcomes that improve human welfare are desirable."
                                         : "Outcomes that threaten human welfare are undesirable."},
                        {"type", "moral"},
                        {"explicitness", "implicit"},
                        {"confidence", 70}});
    moral.push_back(id);
  }

  json rels = json::array();
  std::uint32_t r = 1;
  std::string base;
  if (plain.size() >= 2) {
    std::string expr;
    for (const auto& p : plain) expr += (expr.empty() ? "" : " + ") + p;
    base = "R" + std::to_string(r);
    rels.push_back({{"id", base}, {"expr", expr}, {"gloss", "the claims jointly describe the situation"}});
    ++r;
  } else if (plain.size() == 1) {
    base = plain.front();
  } else {
    base = moral.front();
    moral.erase(moral.begin());
  }
  for (const auto& m : moral) {
    const std::string id = "R" + std::to_string(r++);
    rels.push_back({{"id", id}, {"expr", base + " ^ " + m}, {"gloss", "the situation is judged by a value"}});
    base = id;
  }
  rels.push_back({{"id", "R" + std::to_string(r)}, {"expr", base + " => C1"}, {"gloss", "this supports the conclusion"}});

  json chain = {{"conclusions", json::array({{{"id", "C1"}, {"text", conclusion}}})},
                {"premises", premises},
                {"relationships", rels}};
  return json::array({chain});
}

json synth_extract(const RequestTag& tag, bool deviate) {
  if (tag.role == "integrator") {
    if (tag.step == 0) {
      return {{"faithfulness",
               {{"worker_a", "consistent with the summary"}, {"worker_b", "consistent with the summary"},
                {"preferred", tag.context.value("worker_a", json()).is_null() ? "worker_b" : "worker_a"}}}};
    }
    if (tag.step == 1) {
      return {{"logic", {{"worker_a", "structurally sound"}, {"worker_b", "structurally sound"}}}};
    }
    const json& a = tag.context.value("worker_a", json());
    return a.is_null() ? tag.context.value("worker_b", json()) : a;
  }
  if (tag.step == 1) return tag.context.value("stage1", json({{"chains", json::array()}}));
  return {{"chains", synth_chain(tag.input.value("summary", ""), deviate)}};
}

struct TopicRule {
  std::vector<std::string_view> keys;
  std::string_view label;
};

const std::vector<TopicRule>& topic_rules() {
  static const std::vector<TopicRule> rules = {
      {{"extinct", "existential", "wipe out", "humanity", "destroy", "surviv", "kill us", "catastroph",
        "superintelligen", "control"},
       "AI as Existential/Extinction Risk"},
      {{"job", "employ", "worker", "labor", "labour", "automation", "career", "wage"},
       "AI and Employment & Labor Markets"},
      {{"misinformation", "deepfake", "manipulat", "propaganda"},
       "AI and Information Integrity/Manipulation (incl. deepfakes)"},
      {{"surveillance", "privacy"}, "AI and Mass Surveillance & Data Privacy"},
      {{"bias", "discriminat"}, "AI and Fairness, Bias & Discrimination"},
      {{"regulat", "law", "audit"}, "AI Regulation, Standards & Auditing"},
      {{"military", "weapon", "war "}, "AI and Military/National-Security Risks"},
      {{"cyber", "hack"}, "AI and Cybersecurity (Offense & Defense)"},
      {{"align", "values", "goal"}, "AI Alignment Problem"},
      {{"energy", "climate", "emission"}, "AI Environmental Footprint (energy/compute/emissions)"},
      {{"inequality", "wealth", "rich"}, "AI and Economic Inequality & Fairness"},
  };
  return rules;
}

json synth_classify(const RequestTag& tag, bool deviate) {
  if (tag.role == "integrator") {
    json vote = tag.context.value("worker_a", json());
    if (vote.is_null()) vote = tag.context.value("worker_b", json());
    vote["workers_equivalent"] = false;
    return vote;
  }
  const std::string text = tag.input.value("conclusion", "");
  const std::string l = to_lower(text);
  std::set<std::string> listed;
  for (const auto& t : tag.input.at("topics")) listed.insert(t.at("label").get<std::string>());

  std::vector<std::string> hits;
  for (const auto& rule : topic_rules()) {
    if (contains_any(l, rule.keys) && listed.count(std::string(rule.label))) hits.emplace_back(rule.label);
  }
  std::string topic;
  if (!mentions_ai(text)) {
    topic = "Non-AI topic";
  } else if (hits.empty()) {
    topic = "AI-Human Competition & Collaboration";
  } else {
    topic = (deviate && hits.size() > 1) ? hits[1] : hits[0];
  }
  if (!listed.count(topic)) topic = tag.input.at("topics").at(0).at("label").get<std::string>();

  const int score = attitude_score(text);
  std::string attitude = score > 0 ? "optimistic" : score < 0 ? "pessimistic" : "neutral";
  return {{"topic", topic}, {"new_topic", false}, {"theme", nullptr}, {"attitude", attitude}};
}

json synth_disagree(const RequestTag& tag, bool deviate) {
  if (tag.role == "integrator") {
    const json& a = tag.context.value("worker_a", json());
    const json& b = tag.context.value("worker_b", json());
    if (tag.step == 0) {
      const bool agree = !a.is_null() && !b.is_null() &&
                         a.value("is_disagreement", false) == b.value("is_disagreement", false);
      return {{"comparison", {{"agree_on_disagreement", agree}, {"notes", "compared divergence sets"}}}};
    }
    return a.is_null() ? b : a;
  }
  const json& boomer = tag.input.at("boomer").at("chain");
  const json& doomer = tag.input.at("doomer").at("chain");
  auto first_of_type = [](const json& chain, const std::string& type) -> std::string {
    for (const auto& p : chain.value("premises", json::array())) {
      if (p.value("type", "") == type) return p.at("id").get<std::string>();
    }
    return {};
  };
  json divergences = json::array();
  for (const char* type : {"definitional", "causal", "factual", "forecast", "moral"}) {
    const std::string b = first_of_type(boomer, type);
    const std::string d = first_of_type(doomer, type);
    if (b.empty() || d.empty()) continue;
    divergences.push_back({{"boomer_ref", b}, {"doomer_ref", d}, {"type", type}, {"primary", nullptr},
                           {"depends_on", json::array()},
                           {"rationale", std::string("the speakers hold conflicting ") + type + " beliefs"}});
  }
  const json& bp = boomer.value("premises", json::array());
  const json& dp = doomer.value("premises", json::array());
  if (divergences.empty() && !bp.empty() && !dp.empty()) {
    divergences.push_back({{"boomer_ref", bp[0].at("id")}, {"doomer_ref", dp[0].at("id")},
                           {"type", bp[0].value("type", "factual")}, {"primary", "boomer"},
                           {"depends_on", json::array()}, {"rationale", "the opening premises conflict"}});
  }
  if (divergences.empty()) {
    return {{"is_disagreement", false}, {"divergences", json::array()}, {"root", nullptr}};
  }
  if (deviate) std::reverse(divergences.begin(), divergences.end());
  for (std::size_t i = 0; i < divergences.size(); ++i) divergences[i]["id"] = "D" + std::to_string(i + 1);
  return {{"is_disagreement", true}, {"divergences", divergences}, {"root", "D1"}};
}

std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> out;
  std::string word;
  for (char c : to_lower(text) + " ") {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += c;
    } else {
      if (word.size() >= 4) out.insert(word);
      word.clear();
    }
  }
  return out;
}

json synth_aggregate(const RequestTag& tag) {
  if (tag.role == "integrator") {
    const json& a = tag.context.value("worker_a", json());
    return a.is_null() ? tag.context.value("worker_b", json()) : a;
  }
  const json& d = tag.input.at("divergence");
  const std::string boomer = d.value("boomer_premise", "");
  const std::set<std::string> words = content_words(boomer + " " + d.value("doomer_premise", ""));
  std::string best;
  std::size_t best_overlap = 0;
  json best_stances;
  for (const auto& q : tag.input.at("questions")) {
    std::size_t overlap = 0;
    for (const auto& w : content_words(q.value("text", ""))) overlap += words.count(w);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = q.at("question_id").get<std::string>();
      best_stances = q.at("stances");
    }
  }
  if (best_overlap >= 2) {
    return {{"question_id", best}, {"new_question", nullptr}, {"boomer_stance", best_stances.at(0)},
            {"doomer_stance", best_stances.at(1)}};
  }
  std::string claim = std::string(trim(boomer));
  while (!claim.empty() && (claim.back() == '.' || claim.back() == '!')) claim.pop_back();
  if (!claim.empty()) claim[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(claim[0])));
  return {{"question_id", nullptr},
          {"new_question", {{"text", "Is it the case that " + claim + "?"}, {"stances", {"holds", "does not hold"}}}},
          {"boomer_stance", "holds"},
          {"doomer_stance", "does not hold"}};
}

}  // namespace

std::string synthesize_mock_reply(const std::string& model, std::uint64_t seed, const RequestTag& tag) {
  const bool deviate = tag.role == "worker_b" && request_hash(model, seed, tag) % 4 == 0;
  json reply;
  if (tag.task_kind == "segment") {
    reply = synth_segment(tag);
  } else if (tag.task_kind == "summarize") {
    reply = synth_summarize(tag, deviate);
  } else if (tag.task_kind == "extract") {
    reply = synth_extract(tag, deviate);
  } else if (tag.task_kind == "classify_topic_attitude") {
    reply = synth_classify(tag, deviate);
  } else if (tag.task_kind == "disagree") {
    reply = synth_disagree(tag, deviate);
  } else if (tag.task_kind == "aggregate_classify") {
    reply = synth_aggregate(tag);
  } else {
    throw BackendError(model + ": mock cannot synthesize task " + tag.task_kind);
  }
  return reply.dump();
}

}  // namespace peel
