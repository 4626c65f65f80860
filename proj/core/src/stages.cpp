#include "peel/stages.hpp"

#include <set>

#include "peel/chain_io.hpp"
#include "peel/text.hpp"
#include "peel/validator.hpp"

namespace peel {

using nlohmann::json;

namespace {

std::string schema_of(const EnsembleConfig& config, const char* name) { return config.prompts.get(name); }

std::string pretty(const json& payload) {
  return payload.is_null() ? std::string("(this analyst produced no usable output)") : payload.dump(2);
}

PayloadCheck require_object_field(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end() || !it->is_object()) {
    return PayloadCheck::schema(std::string("expected an object field '") + key + "'");
  }
  return PayloadCheck::ok();
}

}  // namespace

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

json to_json(const std::vector<Segment>& segments) {
  json list = json::array();
  for (const auto& s : segments) {
    list.push_back({{"summary", s.summary}, {"start_turn", s.start_turn}, {"end_turn", s.end_turn}});
  }
  return {{"segments", list}};
}

std::vector<Segment> segments_from_json(const json& doc) {
  const json& list = doc.is_object() ? doc.at("segments") : doc;
  if (!list.is_array()) throw SchemaError("segments must be an array");
  std::vector<Segment> out;
  for (const auto& item : list) {
    if (!item.is_object()) throw SchemaError("segment must be an object");
    const auto& st = item.at("start_turn");
    const auto& en = item.at("end_turn");
    if (!st.is_number_integer() || !en.is_number_integer()) throw SchemaError("segment turns must be integers");
    const auto& sum = item.value("summary", json(""));
    if (!sum.is_string()) throw SchemaError("segment summary must be a string");
    out.push_back({sum.get<std::string>(), st.get<int>(), en.get<int>()});
  }
  return out;
}

std::string segment_problem(const std::vector<Segment>& segments, int turn_count) {
  if (segments.empty()) return "no segments returned";
  int previous_end = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const std::string where = "segment " + std::to_string(i + 1) + " [" + std::to_string(s.start_turn) + ", " +
                              std::to_string(s.end_turn) + "]";
    if (s.start_turn > s.end_turn) return where + ": start_turn is after end_turn";
    if (s.start_turn < 1 || s.end_turn > turn_count) {
      return where + ": outside turns 1-" + std::to_string(turn_count);
    }
    if (s.start_turn <= previous_end) return where + ": overlaps or precedes the previous segment";
    previous_end = s.end_turn;
  }
  return {};
}

SegmentResult segment_transcript(const Transcript& transcript, const EnsembleConfig& config) {
  if (transcript.turns.empty()) throw EmptyTranscript();
  const int turn_count = static_cast<int>(transcript.turns.size());
  const json input = to_json(transcript);

  EnsembleProtocol protocol;
  protocol.single_model = true;
  protocol.equivalent = [](const json& a, const json& b) { return a == b; };
  protocol.integrate = [&](RoleSession& s, const json&, const json&, const json&, json&) {
    const std::string schema = schema_of(config, "segment.schema");
    const std::string user = config.prompts.render(
        "segment.user", {{"episode", transcript.episode},
                         {"title", transcript.title},
                         {"turn_count", std::to_string(turn_count)},
                         {"transcript", render_turns(transcript.turns)},
                         {"schema", schema}});
    return s.ask_json(config.prompts.get("segment.system"), user, schema, [&](const json& payload) {
      std::vector<Segment> segs;
      try {
        segs = segments_from_json(payload);
      } catch (const std::exception& e) {
        return PayloadCheck::schema(e.what());
      }
      const std::string problem = segment_problem(segs, turn_count);
      return problem.empty() ? PayloadCheck::ok() : PayloadCheck::schema(problem);
    });
  };
  SegmentResult result;
  result.record = run_ensemble_task(TaskKind::Segment, input, config, protocol);
  result.segments = segments_from_json(result.record.integrated_out);
  return result;
}

// ---------------------------------------------------------------------------
// Summarization
// ---------------------------------------------------------------------------

json to_json(const SpeakerSummary& s) {
  return {{"episode", s.episode}, {"speaker", s.speaker}, {"summary", s.text}, {"needs_review", s.needs_review}};
}

SpeakerSummary summary_from_json(const json& doc) {
  try {
    return {doc.at("episode").get<std::string>(), doc.at("speaker").get<std::string>(),
            doc.at("summary").get<std::string>(), doc.value("needs_review", false)};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("summary: ") + e.what());
  }
}

std::vector<std::string> speakers_of(const Transcript& transcript) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : transcript.turns) {
    if (seen.insert(t.speaker).second) out.push_back(t.speaker);
  }
  return out;
}

namespace {

PayloadCheck check_summary(const json& payload) {
  auto it = payload.find("summary");
  if (it == payload.end() || !it->is_string()) return PayloadCheck::schema("expected a string field 'summary'");
  return PayloadCheck::ok();
}

}  // namespace

SummaryResult summarize_speaker(const Transcript& transcript, const std::vector<Segment>& segments,
                                const std::string& speaker, const EnsembleConfig& config) {
  json seg_list = json::array();
  std::vector<Turn> conversation;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    std::vector<Turn> turns;
    bool mentions = false;
    for (int n = s.start_turn; n <= s.end_turn && n <= static_cast<int>(transcript.turns.size()); ++n) {
      const Turn& t = transcript.turns[static_cast<std::size_t>(n - 1)];
      mentions = mentions || t.speaker == speaker;
      turns.push_back(t);
    }
    if (!mentions) continue;
    json turn_docs = json::array();
    for (const auto& t : turns) turn_docs.push_back({{"n", t.number}, {"speaker", t.speaker}, {"text", t.text}});
    seg_list.push_back({{"index", i + 1},
                        {"start_turn", s.start_turn},
                        {"end_turn", s.end_turn},
                        {"summary", s.summary},
                        {"turns", turn_docs}});
    conversation.insert(conversation.end(), turns.begin(), turns.end());
  }
  if (seg_list.empty()) throw EmptyInput("speaker '" + speaker + "' appears in no segment");

  const json input = {{"episode", transcript.episode}, {"speaker", speaker}, {"segments", seg_list}};
  const std::string schema = schema_of(config, "summarize.schema");

  EnsembleProtocol protocol;
  protocol.equivalent = [](const json& a, const json& b) {
    return trim(a.value("summary", "")) == trim(b.value("summary", ""));
  };
  protocol.worker = [&](RoleSession& s, const json&) {
    std::string joined;
    for (std::size_t pos = 0; pos < seg_list.size(); ++pos) {
      const json& seg = seg_list[pos];
      std::vector<Turn> turns;
      for (const auto& t : seg.at("turns")) {
        turns.push_back({t.at("n").get<int>(), t.at("speaker").get<std::string>(), t.at("text").get<std::string>()});
      }
      const std::string user = config.prompts.render(
          "summarize.worker.user", {{"speaker", speaker},
                                    {"episode", transcript.episode},
                                    {"segment_index", std::to_string(seg.at("index").get<int>())},
                                    {"start_turn", std::to_string(seg.at("start_turn").get<int>())},
                                    {"end_turn", std::to_string(seg.at("end_turn").get<int>())},
                                    {"segment_summary", seg.at("summary").get<std::string>()},
                                    {"segment_text", render_turns(turns)},
                                    {"schema", schema}});
      const json part = s.ask_json(config.prompts.get("summarize.worker.system"), user, schema, check_summary,
                                   {{"segment_position", pos}});
      const std::string text(trim(part.at("summary").get<std::string>()));
      if (text.empty()) continue;
      if (!joined.empty()) joined += "\n\n";
      joined += text;
    }
    return json{{"summary", joined}};
  };
  protocol.integrate = [&](RoleSession& s, const json&, const json& a, const json& b, json&) {
    auto text_of = [](const json& p) {
      return p.is_null() ? std::string("(this analyst produced no usable output)") : p.value("summary", "");
    };
    const std::string user = config.prompts.render("summarize.integrator.user",
                                                   {{"speaker", speaker},
                                                    {"episode", transcript.episode},
                                                    {"transcript", render_turns(conversation)},
                                                    {"summary_a", text_of(a)},
                                                    {"summary_b", text_of(b)},
                                                    {"schema", schema}});
    json out = s.ask_json(config.prompts.get("summarize.integrator.system"), user, schema, check_summary,
                          {{"worker_a", a}, {"worker_b", b}});
    return json{{"summary", std::string(trim(out.at("summary").get<std::string>()))}};
  };

  SummaryResult result;
  result.record = run_ensemble_task(TaskKind::Summarize, input, config, protocol);
  result.summary.episode = transcript.episode;
  result.summary.speaker = speaker;
  result.summary.text = result.record.integrated_out.at("summary").get<std::string>();
  result.summary.needs_review = result.summary.text.empty();
  return result;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

std::vector<ReasoningChain> chains_from_payload(const json& payload, const SpeakerMeta& speaker,
                                                const std::string& episode) {
  auto it = payload.find("chains");
  if (it == payload.end() || !it->is_array()) throw SchemaError("expected an array field 'chains'");
  std::vector<ReasoningChain> out;
  for (std::size_t i = 0; i < it->size(); ++i) {
    json doc = (*it)[i];
    if (!doc.is_object()) throw SchemaError("chain " + std::to_string(i + 1) + " is not an object");
    doc.erase("speaker");
    doc.erase("episode");
    doc.erase("schema_version");
    try {
      ReasoningChain chain = chain_from_json(doc);
      chain.speaker = speaker;
      chain.episode = episode;
      out.push_back(std::move(chain));
    } catch (const ValidationError& e) {
      throw SchemaError("chain " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

PayloadCheck check_extraction_payload(const json& payload) {
  std::vector<ReasoningChain> chains;
  try {
    chains = chains_from_payload(payload, SpeakerMeta{}, "");
  } catch (const ValidationError& e) {
    return PayloadCheck::schema(e.what());
  }
  std::string problems;
  for (std::size_t i = 0; i < chains.size(); ++i) {
    const auto report =
        validate_chain(chains[i], {ViolationCode::V1_DuplicateId, ViolationCode::V2_UnresolvedRef,
                                   ViolationCode::V3_Cycle, ViolationCode::V7_ConfidenceRange,
                                   ViolationCode::V8_BadArity});
    for (const auto& v : report.violations) {
      if (!problems.empty()) problems += "; ";
      problems += "chain " + std::to_string(i + 1) + " " + std::string(to_string(v.code)) + " at " +
                  v.subject.str() + ": " + v.detail;
    }
  }
  return problems.empty() ? PayloadCheck::ok() : PayloadCheck::structural(problems);
}

bool extraction_payloads_equivalent(const json& a, const json& b) {
  try {
    const auto ca = chains_from_payload(a, SpeakerMeta{}, "");
    const auto cb = chains_from_payload(b, SpeakerMeta{}, "");
    if (ca.size() != cb.size()) return false;
    for (std::size_t i = 0; i < ca.size(); ++i) {
      if (!structurally_equal_modulo_gloss(ca[i], cb[i])) return false;
    }
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

namespace {

// Chain documents without speaker attribution, as stored in task records.
json normalize_extraction(const json& payload) {
  json chains = json::array();
  for (const auto& c : chains_from_payload(payload, SpeakerMeta{}, "")) {
    json doc = chain_to_json(c);
    doc.erase("speaker");
    doc.erase("episode");
    doc.erase("schema_version");
    chains.push_back(std::move(doc));
  }
  return {{"chains", chains}};
}

}  // namespace

ExtractionResult extract_reasoning(const SpeakerSummary& summary, const SpeakerMeta& speaker,
                                   const EnsembleConfig& config) {
  if (trim(summary.text).empty()) throw EmptyInput("cannot extract reasoning from an empty summary");
  const json input = {{"episode", summary.episode}, {"speaker", summary.speaker}, {"summary", summary.text}};
  const std::string schema = schema_of(config, "extract.schema");

  EnsembleProtocol protocol;
  protocol.equivalent = extraction_payloads_equivalent;
  protocol.worker = [&](RoleSession& s, const json&) {
    const std::string system = config.prompts.get("extract.system");
    const json stage1 = normalize_extraction(s.ask_json(
        system,
        config.prompts.render("extract.user",
                              {{"speaker", summary.speaker}, {"episode", summary.episode},
                               {"summary", summary.text}, {"schema", schema}}),
        schema, check_extraction_payload));
    const json stage2 = s.ask_json(
        system,
        config.prompts.render("extract.validate",
                              {{"summary", summary.text}, {"stage1", stage1.dump(2)}, {"schema", schema}}),
        schema, check_extraction_payload, {{"stage1", stage1}});
    return normalize_extraction(stage2);
  };
  protocol.integrate = [&](RoleSession& s, const json&, const json& a, const json& b, json& trace) {
    const std::string system = config.prompts.get("extract.integrator.system");
    const json ctx = {{"worker_a", a}, {"worker_b", b}};
    const std::string ea = pretty(a);
    const std::string eb = pretty(b);
    const json faith = s.ask_json(
        system,
        config.prompts.render("extract.integrator.faithfulness",
                              {{"summary", summary.text}, {"extraction_a", ea}, {"extraction_b", eb}}),
        R"({"faithfulness": {"worker_a": "...", "worker_b": "...", "preferred": "worker_a|worker_b|neither"}})",
        [](const json& p) { return require_object_field(p, "faithfulness"); }, ctx);
    trace.push_back({{"step", "faithfulness"}, {"output", faith}});
    const json logic = s.ask_json(
        system,
        config.prompts.render("extract.integrator.logic",
                              {{"faithfulness", faith.dump(2)}, {"extraction_a", ea}, {"extraction_b", eb}}),
        R"({"logic": {"worker_a": "...", "worker_b": "..."}})",
        [](const json& p) { return require_object_field(p, "logic"); }, ctx);
    trace.push_back({{"step", "logic"}, {"output", logic}});
    const json decision = s.ask_json(system,
                                     config.prompts.render("extract.integrator.decision",
                                                           {{"summary", summary.text},
                                                            {"faithfulness", faith.dump(2)},
                                                            {"logic", logic.dump(2)},
                                                            {"extraction_a", ea},
                                                            {"extraction_b", eb},
                                                            {"schema", schema}}),
                                     schema, check_extraction_payload, ctx);
    return normalize_extraction(decision);
  };

  ExtractionResult result;
  result.record = run_ensemble_task(TaskKind::Extract, input, config, protocol);
  result.chains = chains_from_payload(result.record.integrated_out, speaker, summary.episode);
  return result;
}

}  // namespace peel
