#include "peel/chain_io.hpp"

#include <cmath>
#include <fstream>

#include "peel/error.hpp"
#include "peel/text.hpp"

namespace peel {

namespace {

std::string expression_text(const Relationship& rel) {
  // serialize_relation yields "Rk: <expr>[ -> gloss]"; keep only <expr>.
  Relationship bare = rel;
  bare.gloss.reset();
  const std::string line = serialize_relation(bare);
  return line.substr(line.find(':') + 2);
}

const json& require(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw SchemaError(std::string(where) + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(std::string(where) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

RefLabel require_label(const json& obj, LabelKind kind, const char* where) {
  const auto text = require_string(obj, "id", where);
  auto label = RefLabel::parse(trim(text));
  if (!label || label->kind() != kind) {
    throw SchemaError(std::string(where) + ": bad id '" + text + "'");
  }
  return *label;
}

int require_confidence(const json& obj, const std::string& where) {
  const auto& v = require(obj, "confidence", where.c_str());
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 1e6) return static_cast<int>(d);
  }
  throw SchemaError(where + ": confidence must be an integer percent, got " + v.dump());
}

json premise_to_json(const Premise& p) {
  return json{{"id", p.id.str()},
              {"text", p.text},
              {"type", p.type ? std::string(to_string(*p.type)) : std::string(kPendingTypeLabel)},
              {"explicitness", std::string(to_string(p.explicitness))},
              {"confidence", p.confidence}};
}

Premise premise_from_json(const json& doc) {
  Premise p;
  p.id = require_label(doc, LabelKind::Premise, "premise");
  const std::string where = "premise " + p.id.str();
  p.text = require_string(doc, "text", where.c_str());
  if (trim(p.text).empty()) throw SchemaError(where + ": text is empty");
  const auto type = require_string(doc, "type", where.c_str());
  if (to_lower(trim(type)) != kPendingTypeLabel) p.type = normalize_premise_type(type);
  const auto explicitness = require_string(doc, "explicitness", where.c_str());
  auto e = explicitness_from_string(explicitness);
  if (!e) throw SchemaError(where + ": explicitness must be explicit|implicit");
  p.explicitness = *e;
  p.confidence = require_confidence(doc, where);
  return p;
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

}  // namespace

json speaker_to_json(const SpeakerMeta& speaker) {
  return json{{"name", speaker.name},
              {"profession", speaker.profession ? json(std::string(to_string(*speaker.profession)))
                                                : json(nullptr)},
              {"gender", std::string(to_string(speaker.gender))}};
}

SpeakerMeta speaker_from_json(const json& doc) {
  SpeakerMeta s;
  if (doc.is_string()) {
    s.name = doc.get<std::string>();
    return s;
  }
  s.name = require_string(doc, "name", "speaker");
  if (auto prof = optional_string(doc, "profession")) {
    s.profession = profession_from_string(*prof);
    if (!s.profession) throw SchemaError("speaker: unknown profession '" + *prof + "'");
  }
  if (auto g = optional_string(doc, "gender")) {
    auto gender = gender_from_string(*g);
    if (!gender) throw SchemaError("speaker: unknown gender '" + *g + "'");
    s.gender = *gender;
  }
  return s;
}

json chain_to_json(const ReasoningChain& chain) {
  json doc;
  doc["schema_version"] = std::string(kChainSchemaVersion);
  doc["speaker"] = speaker_to_json(chain.speaker);
  doc["episode"] = chain.episode;
  doc["conclusions"] = json::array();
  for (const auto& c : chain.conclusions) {
    doc["conclusions"].push_back(
        json{{"id", c.id.str()},
             {"text", c.text},
             {"topic", c.topic ? json(*c.topic) : json(nullptr)},
             {"attitude", c.attitude ? json(std::string(to_string(*c.attitude))) : json(nullptr)}});
  }
  doc["premises"] = json::array();
  for (const auto& p : chain.premises) doc["premises"].push_back(premise_to_json(p));
  doc["relationships"] = json::array();
  for (const auto& r : chain.relationships) {
    json rel{{"id", r.id.str()},
             {"expr", expression_text(r)},
             {"gloss", r.gloss ? json(*r.gloss) : json(nullptr)}};
    if (r.mode != CombineMode::Unspecified) rel["mode"] = std::string(to_string(r.mode));
    doc["relationships"].push_back(std::move(rel));
  }
  doc["derived_premises"] = json::array();
  for (const auto& p : chain.derived_premises) doc["derived_premises"].push_back(premise_to_json(p));
  return doc;
}

ReasoningChain chain_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("chain document must be an object");
  if (doc.contains("schema_version")) {
    const auto& v = doc.at("schema_version");
    const std::string version = v.is_string() ? v.get<std::string>() : v.dump();
    if (version != kChainSchemaVersion) {
      throw SchemaError("unsupported chain schema_version " + version);
    }
  }
  ReasoningChain chain;
  if (doc.contains("speaker") && !doc.at("speaker").is_null()) {
    chain.speaker = speaker_from_json(doc.at("speaker"));
  }
  if (doc.contains("episode") && !doc.at("episode").is_null()) {
    const auto& ep = doc.at("episode");
    chain.episode = ep.is_string() ? ep.get<std::string>() : ep.dump();
  }

  const auto& conclusions = require(doc, "conclusions", "chain");
  if (!conclusions.is_array() || conclusions.empty()) {
    throw SchemaError("chain: conclusions must be a non-empty array");
  }
  for (const auto& c : conclusions) {
    Conclusion out;
    out.id = require_label(c, LabelKind::Conclusion, "conclusion");
    out.text = require_string(c, "text", "conclusion");
    if (trim(out.text).empty()) throw SchemaError("conclusion " + out.id.str() + ": text is empty");
    out.topic = optional_string(c, "topic");
    if (auto a = optional_string(c, "attitude")) {
      out.attitude = attitude_from_string(*a);
      if (!out.attitude) throw SchemaError("conclusion " + out.id.str() + ": bad attitude '" + *a + "'");
    }
    chain.conclusions.push_back(std::move(out));
  }

  const auto& premises = require(doc, "premises", "chain");
  if (!premises.is_array()) throw SchemaError("chain: premises must be an array");
  for (const auto& p : premises) chain.premises.push_back(premise_from_json(p));

  if (doc.contains("derived_premises") && doc.at("derived_premises").is_array()) {
    for (const auto& p : doc.at("derived_premises")) {
      chain.derived_premises.push_back(premise_from_json(p));
    }
  }

  const auto& relationships = require(doc, "relationships", "chain");
  if (!relationships.is_array()) throw SchemaError("chain: relationships must be an array");
  for (const auto& r : relationships) {
    const auto id_text = require_string(r, "id", "relationship");
    auto id = RefLabel::parse(trim(id_text));
    if (!id || id->kind() != LabelKind::Relationship) {
      throw SchemaError("relationship: bad id '" + id_text + "'");
    }
    std::string expr = require_string(r, "expr", "relationship");
    // Tolerate expressions that repeat their own label ("R3: P1 + P2").
    auto body = trim(expr);
    if (auto colon = body.find(':'); colon != std::string_view::npos &&
                                      RefLabel::parse(trim(body.substr(0, colon)))) {
      body = trim(body.substr(colon + 1));
    }
    Relationship rel = parse_relation(id->str() + ": " + std::string(body));
    if (auto g = optional_string(r, "gloss"); g && !trim(*g).empty()) rel.gloss = *g;
    if (auto m = optional_string(r, "mode")) {
      auto mode = combine_mode_from_string(*m);
      if (!mode) throw SchemaError("relationship " + rel.id.str() + ": bad mode '" + *m + "'");
      rel.mode = *mode;
    }
    chain.relationships.push_back(std::move(rel));
  }

  materialize_derived_premises(chain);
  return chain;
}

std::vector<ReasoningChain> chains_from_json(const json& doc) {
  std::vector<ReasoningChain> out;
  const json* list = &doc;
  if (doc.is_object() && doc.contains("chains")) list = &doc.at("chains");
  if (list->is_array()) {
    for (const auto& c : *list) out.push_back(chain_from_json(c));
  } else if (list->is_object()) {
    out.push_back(chain_from_json(*list));
  } else {
    throw SchemaError("expected a chain, a chain array, or {\"chains\": [...]}");
  }
  return out;
}

json chains_to_json(const std::vector<ReasoningChain>& chains) {
  json arr = json::array();
  for (const auto& c : chains) arr.push_back(chain_to_json(c));
  return json{{"schema_version", std::string(kChainSchemaVersion)}, {"chains", std::move(arr)}};
}

ReasoningChain load_chain_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open chain file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return chain_from_json(doc);
}

}  // namespace peel
