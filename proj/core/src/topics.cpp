#include "peel/topics.hpp"

#include <cstdio>

#include "peel/csv.hpp"
#include "peel/prompts.hpp"
#include "peel/text.hpp"

namespace peel {

using nlohmann::json;

namespace {

std::string topic_id_for(std::size_t ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%03zu", ordinal);
  return buf;
}

std::string_view origin_name(TopicOrigin o) { return o == TopicOrigin::Seed ? "seed" : "model_created"; }

}  // namespace

// ---------------------------------------------------------------------------
// TopicList
// ---------------------------------------------------------------------------

void TopicList::push(TopicEntry entry) {
  if (find_label(entry.label)) throw SchemaError("duplicate topic label: " + entry.label);
  if (find_id(entry.topic_id)) throw SchemaError("duplicate topic id: " + entry.topic_id);
  entries_.push_back(std::move(entry));
}

TopicList TopicList::seeded() {
  const json doc = json::parse(embedded_resource("data/topics_seed.json"));
  TopicList list;
  for (const auto& t : doc.at("topics")) {
    list.push({topic_id_for(list.entries_.size() + 1), t.at("label").get<std::string>(),
               t.at("theme").get<std::string>(), TopicOrigin::Seed, 0});
  }
  return list;
}

TopicList TopicList::from_json(const json& doc) {
  try {
    TopicList list;
    list.revision_ = doc.at("revision").get<int>();
    for (const auto& t : doc.at("entries")) {
      const std::string origin = t.value("origin", "seed");
      list.push({t.at("topic_id").get<std::string>(), t.at("label").get<std::string>(),
                 t.value("theme", std::string(kUnassignedTheme)),
                 origin == "seed" ? TopicOrigin::Seed : TopicOrigin::ModelCreated, t.value("revision_added", 0)});
    }
    return list;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("topic list: ") + e.what());
  }
}

json TopicList::to_json() const {
  json entries = json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"topic_id", e.topic_id},
                       {"label", e.label},
                       {"theme", e.theme},
                       {"origin", origin_name(e.origin)},
                       {"revision_added", e.revision_added}});
  }
  return {{"revision", revision_}, {"entries", entries}};
}

std::vector<std::string> TopicList::themes() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    bool seen = false;
    for (const auto& t : out) seen = seen || t == e.theme;
    if (!seen) out.push_back(e.theme);
  }
  return out;
}

const TopicEntry* TopicList::find_id(std::string_view topic_id) const {
  for (const auto& e : entries_) {
    if (e.topic_id == topic_id) return &e;
  }
  return nullptr;
}

const TopicEntry* TopicList::find_label(std::string_view label) const {
  const std::string key = normalize_label(label);
  for (const auto& e : entries_) {
    if (normalize_label(e.label) == key) return &e;
  }
  return nullptr;
}

const TopicEntry& TopicList::add(const std::string& label, const std::string& theme) {
  if (const auto* existing = find_label(label)) return *existing;
  const std::string clean(trim(label));
  if (clean.empty()) throw MalformedOutput("empty topic label");
  ++revision_;
  push({topic_id_for(entries_.size() + 1), clean, theme, TopicOrigin::ModelCreated, revision_});
  return entries_.back();
}

// ---------------------------------------------------------------------------
// Votes
// ---------------------------------------------------------------------------

std::string conclusion_key(const ReasoningChain& chain, std::size_t chain_index, const Conclusion& conclusion) {
  return chain.episode + "/" + chain.speaker.name + "/" + std::to_string(chain_index) + "/" + conclusion.id.str();
}

ConclusionInput conclusion_input(const ReasoningChain& chain, std::size_t chain_index, const Conclusion& conclusion) {
  ConclusionInput in{conclusion_key(chain, chain_index, conclusion), conclusion.text, {}};
  for (const auto& p : chain.premises) in.premises.push_back(p.id.str() + ": " + p.text);
  return in;
}

std::string TopicVote::topic_key() const { return topic_id.empty() ? "new:" + normalize_label(label) : topic_id; }

namespace {

json vote_to_json(const TopicVote& v) {
  return {{"topic", v.label}, {"topic_id", v.topic_id.empty() ? json() : json(v.topic_id)},
          {"theme", v.theme}, {"attitude", to_string(v.attitude)}};
}

TopicVote vote_from_json(const json& doc) {
  TopicVote v;
  v.label = doc.at("topic").get<std::string>();
  const json& id = doc.value("topic_id", json());
  v.topic_id = id.is_string() ? id.get<std::string>() : "";
  v.theme = doc.value("theme", "");
  v.attitude = attitude_from_string(doc.at("attitude").get<std::string>()).value_or(Attitude::Neutral);
  return v;
}

PayloadCheck check_vote(const json& p) {
  auto topic = p.find("topic");
  if (topic == p.end() || !topic->is_string() || trim(topic->get<std::string>()).empty()) {
    return PayloadCheck::schema("expected a non-empty string field 'topic'");
  }
  auto att = p.find("attitude");
  if (att == p.end() || !att->is_string() || !attitude_from_string(to_lower(att->get<std::string>()))) {
    return PayloadCheck::schema("'attitude' must be one of optimistic, neutral, pessimistic");
  }
  auto theme = p.find("theme");
  if (theme != p.end() && !theme->is_null() && !theme->is_string()) {
    return PayloadCheck::schema("'theme' must be a string or null");
  }
  return PayloadCheck::ok();
}

// Resolves a raw model answer against the list the model saw.
json normalize_vote(const json& raw, const json& listed) {
  const std::string label(trim(raw.at("topic").get<std::string>()));
  const std::string key = normalize_label(label);
  json out = {{"topic", label}, {"topic_id", nullptr}, {"theme", ""},
              {"attitude", to_lower(raw.at("attitude").get<std::string>())}};
  for (const auto& t : listed) {
    if (normalize_label(t.at("label").get<std::string>()) == key) {
      out["topic"] = t.at("label");
      out["topic_id"] = t.at("topic_id");
      out["theme"] = t.at("theme");
      return out;
    }
  }
  const json& theme = raw.value("theme", json());
  out["theme"] = theme.is_string() ? theme.get<std::string>() : "";
  return out;
}

std::string topic_key_of(const json& vote) {
  const json& id = vote.value("topic_id", json());
  return id.is_string() ? id.get<std::string>() : "new:" + normalize_label(vote.at("topic").get<std::string>());
}

}  // namespace

json to_json(const ClassifiedConclusion& c) {
  return {{"key", c.key},
          {"topic_id", c.topic_id},
          {"topic", c.topic_label},
          {"attitude", to_string(c.attitude)},
          {"is_ai_risk", c.is_ai_risk},
          {"list_revision", c.list_revision},
          {"votes",
           {{"worker_a", c.vote_a ? vote_to_json(*c.vote_a) : json()},
            {"worker_b", c.vote_b ? vote_to_json(*c.vote_b) : json()},
            {"integrator", vote_to_json(c.vote_final)}}},
          {"workers_equivalent", c.workers_equivalent},
          {"created_topic", c.created_topic},
          {"topic_agreement", to_string(c.topic_agreement)},
          {"attitude_agreement", to_string(c.attitude_agreement)}};
}

ClassifiedConclusion classified_from_json(const json& doc) {
  try {
    ClassifiedConclusion c;
    c.key = doc.at("key").get<std::string>();
    c.topic_id = doc.at("topic_id").get<std::string>();
    c.topic_label = doc.at("topic").get<std::string>();
    const auto att = attitude_from_string(doc.at("attitude").get<std::string>());
    if (!att) throw SchemaError("classified conclusion: bad attitude");
    c.attitude = *att;
    c.is_ai_risk = doc.at("is_ai_risk").get<bool>();
    c.list_revision = doc.value("list_revision", 0);
    const json& votes = doc.at("votes");
    if (!votes.at("worker_a").is_null()) c.vote_a = vote_from_json(votes.at("worker_a"));
    if (!votes.at("worker_b").is_null()) c.vote_b = vote_from_json(votes.at("worker_b"));
    c.vote_final = vote_from_json(votes.at("integrator"));
    c.workers_equivalent = doc.value("workers_equivalent", false);
    c.created_topic = doc.value("created_topic", false);
    c.topic_agreement = agreement_from_string(doc.at("topic_agreement").get<std::string>()).value();
    c.attitude_agreement = agreement_from_string(doc.at("attitude_agreement").get<std::string>()).value();
    return c;
  } catch (const std::bad_optional_access&) {
    throw SchemaError("classified conclusion: bad agreement outcome");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("classified conclusion: ") + e.what());
  }
}

ClassificationResult assign_topic_attitude(const ConclusionInput& conclusion, TopicList& topics,
                                           const EnsembleConfig& config) {
  json listed = json::array();
  std::string numbered;
  for (std::size_t i = 0; i < topics.entries().size(); ++i) {
    const auto& e = topics.entries()[i];
    listed.push_back({{"topic_id", e.topic_id}, {"label", e.label}, {"theme", e.theme}});
    numbered += std::to_string(i + 1) + ". " + e.label + "  [theme: " + e.theme + "]\n";
  }
  std::string premises;
  for (const auto& p : conclusion.premises) premises += "- " + p + "\n";
  if (premises.empty()) premises = "(none)\n";

  const json input = {{"conclusion_key", conclusion.key},
                      {"conclusion", conclusion.text},
                      {"premises", conclusion.premises},
                      {"topic_list_revision", topics.revision()},
                      {"topics", listed}};
  const std::string revision = std::to_string(topics.revision());

  EnsembleProtocol protocol;
  protocol.equivalent = [](const json& a, const json& b) {
    return topic_key_of(a) == topic_key_of(b) && a.at("attitude") == b.at("attitude");
  };
  protocol.worker = [&](RoleSession& s, const json&) {
    const std::string schema = config.prompts.get("classify.schema");
    const json raw = s.ask_json(config.prompts.get("classify.worker.system"),
                                config.prompts.render("classify.worker.user",
                                                      {{"revision", revision},
                                                       {"topics", numbered},
                                                       {"conclusion", conclusion.text},
                                                       {"premises", premises},
                                                       {"schema", schema}}),
                                schema, check_vote);
    return normalize_vote(raw, listed);
  };
  protocol.integrate = [&](RoleSession& s, const json&, const json& a, const json& b, json&) {
    const std::string schema = config.prompts.get("classify.integrator.schema");
    auto show = [](const json& v) {
      return v.is_null() ? std::string("(no usable output)")
                         : "topic \"" + v.at("topic").get<std::string>() + "\", attitude " +
                               v.at("attitude").get<std::string>();
    };
    const json raw = s.ask_json(config.prompts.get("classify.integrator.system"),
                                config.prompts.render("classify.integrator.user",
                                                      {{"revision", revision},
                                                       {"topics", numbered},
                                                       {"conclusion", conclusion.text},
                                                       {"premises", premises},
                                                       {"vote_a", show(a)},
                                                       {"vote_b", show(b)},
                                                       {"schema", schema}}),
                                schema, check_vote, {{"worker_a", a}, {"worker_b", b}});
    json out = normalize_vote(raw, listed);
    out["workers_equivalent"] = raw.value("workers_equivalent", false) == true;
    return out;
  };

  ClassificationResult result;
  result.record = run_ensemble_task(TaskKind::ClassifyTopicAttitude, input, config, protocol);
  const EnsembleTaskRecord& rec = result.record;
  ClassifiedConclusion& c = result.classified;
  c.key = conclusion.key;
  c.list_revision = topics.revision();
  if (!rec.worker_a_out.is_null()) c.vote_a = vote_from_json(rec.worker_a_out);
  if (!rec.worker_b_out.is_null()) c.vote_b = vote_from_json(rec.worker_b_out);
  c.vote_final = vote_from_json(rec.integrated_out);
  c.workers_equivalent = rec.integrated_out.value("workers_equivalent", false);

  auto same_topic = [](const TopicVote& x, const TopicVote& y) { return x.topic_key() == y.topic_key(); };
  auto same_attitude = [](const TopicVote& x, const TopicVote& y) { return x.attitude == y.attitude; };
  c.topic_agreement = classify_agreement(c.vote_a, c.vote_b, c.vote_final, same_topic);
  c.attitude_agreement = classify_agreement(c.vote_a, c.vote_b, c.vote_final, same_attitude);

  if (c.vote_final.proposes_new()) {
    std::string theme = std::string(kUnassignedTheme);
    for (const auto& t : topics.themes()) {
      if (normalize_label(t) == normalize_label(c.vote_final.theme)) theme = t;
    }
    const auto& added = topics.add(c.vote_final.label, theme);
    c.created_topic = added.origin == TopicOrigin::ModelCreated && added.revision_added == topics.revision() &&
                      topics.revision() == c.list_revision + 1;
    c.topic_id = added.topic_id;
    c.topic_label = added.label;
  } else {
    c.topic_id = c.vote_final.topic_id;
    c.topic_label = c.vote_final.label;
  }
  c.attitude = c.vote_final.attitude;
  c.is_ai_risk = normalize_label(c.topic_label) != normalize_label(kNonAiTopic);
  return result;
}

// ---------------------------------------------------------------------------
// Agreement table
// ---------------------------------------------------------------------------

namespace {

void finish_block(std::vector<ShareRow>& rows) {
  std::size_t total = 0;
  for (const auto& r : rows) total += r.count;
  for (auto& r : rows) r.share = total ? static_cast<double>(r.count) / static_cast<double>(total) : 0.0;
}

bool is_non_ai(const TopicVote& v) { return normalize_label(v.label) == normalize_label(kNonAiTopic); }

}  // namespace

AgreementTable agreement_table(std::span<const ClassifiedConclusion> classified) {
  AgreementTable t;
  t.conclusions = classified.size();
  t.ai_vs_non_ai = {{"all_3_agree"}, {"2_agree"}, {"no_worker_output"}};
  t.topic = {{"same_topic_as_both"}, {"selects_topic_from_one"}, {"agrees_with_a_only"},
             {"agrees_with_b_only"},  {"proposes_new_topic"},    {"other_existing_topic"}};
  t.attitude = {{"all_3_agree"}, {"agrees_with_one"}, {"disagrees_with_both"}};

  for (const auto& c : classified) {
    // AI vs non-AI
    const bool f = is_non_ai(c.vote_final);
    int matching = 1;
    int voters = 1;
    for (const auto* v : {&c.vote_a, &c.vote_b}) {
      if (!*v) continue;
      ++voters;
      matching += is_non_ai(**v) == f ? 1 : 0;
    }
    if (voters == 1) ++t.ai_vs_non_ai[2].count;
    else if (matching == 3) ++t.ai_vs_non_ai[0].count;
    else ++t.ai_vs_non_ai[1].count;

    if (c.is_ai_risk) {
      ++t.ai_conclusions;
      switch (c.topic_agreement) {
        case AgreementOutcome::R3: ++t.topic[0].count; break;
        case AgreementOutcome::R2MatchesA:
          ++t.topic[c.workers_equivalent && c.vote_b ? 1 : 2].count;
          break;
        case AgreementOutcome::R2MatchesB:
          ++t.topic[c.workers_equivalent && c.vote_a ? 1 : 3].count;
          break;
        case AgreementOutcome::R1: ++t.topic[c.vote_final.proposes_new() ? 4 : 5].count; break;
      }
    }
    switch (c.attitude_agreement) {
      case AgreementOutcome::R3: ++t.attitude[0].count; break;
      case AgreementOutcome::R2MatchesA:
      case AgreementOutcome::R2MatchesB: ++t.attitude[1].count; break;
      case AgreementOutcome::R1: ++t.attitude[2].count; break;
    }
  }
  finish_block(t.ai_vs_non_ai);
  finish_block(t.topic);
  finish_block(t.attitude);
  return t;
}

json to_json(const AgreementTable& t) {
  auto block = [](const std::vector<ShareRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) out.push_back({{"row", r.row}, {"count", r.count}, {"share", r.share}});
    return out;
  };
  return {{"conclusions", t.conclusions},
          {"ai_conclusions", t.ai_conclusions},
          {"ai_vs_non_ai", block(t.ai_vs_non_ai)},
          {"topic", block(t.topic)},
          {"attitude", block(t.attitude)}};
}

std::string agreement_table_csv(const AgreementTable& t) {
  std::string out = csv_row({"block", "row", "count", "share"});
  auto emit = [&](const char* name, const std::vector<ShareRow>& rows) {
    for (const auto& r : rows) {
      char share[32];
      std::snprintf(share, sizeof share, "%.6f", r.share);
      out += csv_row({name, r.row, std::to_string(r.count), share});
    }
  };
  emit("ai_vs_non_ai", t.ai_vs_non_ai);
  emit("topic", t.topic);
  emit("attitude", t.attitude);
  return out;
}

}  // namespace peel
