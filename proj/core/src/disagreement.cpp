#include "peel/disagreement.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "peel/chain_io.hpp"
#include "peel/digest.hpp"
#include "peel/log.hpp"
#include "peel/text.hpp"

namespace peel {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Pairs
// ---------------------------------------------------------------------------

std::string ChainPair::pair_key() const {
  std::string slug = slugify(boomer_key) + "__" + slugify(doomer_key);
  if (slug.size() > 120) slug.resize(120);
  return slug + "-" + sha256_hex(boomer_key + "\n" + doomer_key).substr(0, 8);
}

std::vector<ChainPair> enumerate_pairs(const std::string& topic_id, std::span<const ClassifiedConclusion> classified) {
  std::vector<const ClassifiedConclusion*> boomers, doomers;
  for (const auto& c : classified) {
    if (c.topic_id != topic_id || !c.is_ai_risk) continue;
    if (c.attitude == Attitude::Optimistic) boomers.push_back(&c);
    if (c.attitude == Attitude::Pessimistic) doomers.push_back(&c);
  }
  std::vector<ChainPair> pairs;
  pairs.reserve(boomers.size() * doomers.size());
  for (const auto* b : boomers) {
    for (const auto* d : doomers) pairs.push_back({topic_id, b->key, d->key});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Types and dependencies
// ---------------------------------------------------------------------------

namespace {

std::optional<PremiseType> type_of(const ReasoningChain& chain, RefLabel ref) {
  if (const Premise* p = chain.find_premise(ref)) return p->type;
  return std::nullopt;
}

}  // namespace

PremiseType divergence_type(const ReasoningChain& boomer, const ReasoningChain& doomer, RefLabel boomer_ref,
                            RefLabel doomer_ref, const std::optional<std::string>& primary,
                            std::optional<PremiseType> stated, const DtypeRule& rule) {
  const auto tb = type_of(boomer, boomer_ref);
  const auto td = type_of(doomer, doomer_ref);
  if (tb && td) {
    if (*tb == *td) return *tb;
    if (primary == "boomer") return *tb;
    if (primary == "doomer") return *td;
    for (PremiseType t : rule.precedence) {
      if (t == *tb || t == *td) return t;
    }
  }
  if (tb && !td) return *tb;
  if (td && !tb) return *td;
  if (stated) return *stated;
  throw SchemaError("divergence " + boomer_ref.str() + " vs " + doomer_ref.str() +
                    " has no typed premise and no stated type");
}

bool depends_on(const Divergence& a, const Divergence& b, const ChainDag& boomer, const ChainDag& doomer) {
  return boomer.is_descendant(a.boomer_ref, b.boomer_ref) || doomer.is_descendant(a.doomer_ref, b.doomer_ref);
}

void compute_dependencies(std::vector<Divergence>& divergences, const ChainDag& boomer, const ChainDag& doomer) {
  for (std::size_t i = 0; i < divergences.size(); ++i) {
    divergences[i].depends_on.clear();
    for (std::size_t j = 0; j < divergences.size(); ++j) {
      if (i != j && depends_on(divergences[i], divergences[j], boomer, doomer)) {
        divergences[i].depends_on.push_back(divergences[j].id);
      }
    }
  }
}

RootChoice find_root(std::span<const Divergence> divergences, const ChainDag& boomer, const ChainDag& doomer) {
  const std::size_t n = divergences.size();
  if (n == 0) throw EmptyInput("find_root needs at least one divergence");
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      reach[i][j] = i != j && depends_on(divergences[i], divergences[j], boomer, doomer);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) reach[i][j] = reach[i][j] || reach[k][j];
    }
  }

  RootChoice choice;
  std::optional<std::tuple<std::size_t, RefLabel, RefLabel, std::size_t>> best;
  for (std::size_t i = 0; i < n; ++i) {
    bool minimal = true;
    for (std::size_t j = 0; j < n && minimal; ++j) minimal = !reach[i][j] || reach[j][i];
    if (!minimal) continue;
    ++choice.minimal_count;
    const auto& d = divergences[i];
    auto key = std::make_tuple(boomer.depth(d.boomer_ref) + doomer.depth(d.doomer_ref), d.boomer_ref, d.doomer_ref, i);
    if (!best || key < *best) best = key;
  }
  choice.index = std::get<3>(*best);
  for (std::size_t j = 0; j < n; ++j) choice.dependency_cycle = choice.dependency_cycle || reach[choice.index][j];
  return choice;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

const Divergence* DisagreementReport::root_divergence() const {
  if (!root) return nullptr;
  for (const auto& d : divergences) {
    if (d.id == *root) return &d;
  }
  return nullptr;
}

namespace {

json divergence_to_json(const Divergence& d) {
  return {{"id", d.id},
          {"boomer_ref", d.boomer_ref.str()},
          {"doomer_ref", d.doomer_ref.str()},
          {"type", to_string(d.dtype)},
          {"depends_on", d.depends_on},
          {"llm_depends_on", d.llm_depends_on},
          {"primary", d.primary ? json(*d.primary) : json()},
          {"rationale", d.rationale}};
}

RefLabel ref_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) throw SchemaError(std::string("divergence: missing '") + key + "'");
  const auto label = RefLabel::parse(std::string(trim(it->get<std::string>())));
  if (!label || label->kind() == LabelKind::Conclusion) {
    throw SchemaError(std::string("divergence: '") + key + "' must name a premise or relationship, got " +
                      it->dump());
  }
  return *label;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  std::vector<std::string> out;
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return out;
  if (!it->is_array()) throw SchemaError(std::string("divergence: '") + key + "' must be an array");
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaError(std::string("divergence: '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

json to_json(const DisagreementReport& r) {
  json divs = json::array();
  for (const auto& d : r.divergences) divs.push_back(divergence_to_json(d));
  return {{"topic_id", r.pair.topic_id},
          {"pair_key", r.pair.pair_key()},
          {"boomer", r.pair.boomer_key},
          {"doomer", r.pair.doomer_key},
          {"is_disagreement", r.is_disagreement},
          {"divergences", divs},
          {"root", r.root ? json(*r.root) : json()},
          {"llm_root", r.llm_root ? json(*r.llm_root) : json()},
          {"root_mismatch", r.root_mismatch},
          {"minimal_count", r.minimal_count},
          {"dependency_cycle", r.dependency_cycle},
          {"agreement", to_string(r.agreement)},
          {"votes", r.votes}};
}

DisagreementReport report_from_json(const json& doc) {
  try {
    DisagreementReport r;
    r.pair = {doc.at("topic_id").get<std::string>(), doc.at("boomer").get<std::string>(),
              doc.at("doomer").get<std::string>()};
    r.is_disagreement = doc.at("is_disagreement").get<bool>();
    for (const auto& d : doc.at("divergences")) {
      Divergence div;
      div.id = d.at("id").get<std::string>();
      div.boomer_ref = ref_field(d, "boomer_ref");
      div.doomer_ref = ref_field(d, "doomer_ref");
      div.dtype = normalize_premise_type(d.at("type").get<std::string>());
      div.depends_on = string_list(d, "depends_on");
      div.llm_depends_on = string_list(d, "llm_depends_on");
      const json& primary = d.value("primary", json());
      if (primary.is_string()) div.primary = primary.get<std::string>();
      div.rationale = d.value("rationale", "");
      r.divergences.push_back(std::move(div));
    }
    if (doc.at("root").is_string()) r.root = doc.at("root").get<std::string>();
    if (doc.value("llm_root", json()).is_string()) r.llm_root = doc.at("llm_root").get<std::string>();
    r.root_mismatch = doc.value("root_mismatch", false);
    r.minimal_count = doc.value("minimal_count", std::size_t{0});
    r.dependency_cycle = doc.value("dependency_cycle", false);
    const auto ag = agreement_from_string(doc.at("agreement").get<std::string>());
    if (!ag) throw SchemaError("disagreement report: bad agreement");
    r.agreement = *ag;
    r.votes = doc.value("votes", json());
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("disagreement report: ") + e.what());
  }
}

ParsedAnalysis parse_analysis(const json& payload, const ReasoningChain& boomer, const ReasoningChain& doomer,
                              const DtypeRule& rule) {
  ParsedAnalysis out;
  auto dis = payload.find("is_disagreement");
  if (dis == payload.end() || !dis->is_boolean()) throw SchemaError("expected a boolean 'is_disagreement'");
  out.is_disagreement = dis->get<bool>();
  auto list = payload.find("divergences");
  if (list == payload.end() || !list->is_array()) throw SchemaError("expected an array 'divergences'");
  if (!out.is_disagreement) return out;  // divergences of a non-disagreement are ignored
  if (list->empty()) throw SchemaError("is_disagreement is true but no divergence is listed");

  std::set<std::string> ids;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& d = (*list)[i];
    if (!d.is_object()) throw SchemaError("divergence must be an object");
    Divergence div;
    const json& id = d.value("id", json());
    div.id = id.is_string() ? id.get<std::string>() : "D" + std::to_string(i + 1);
    if (!ids.insert(div.id).second) throw SchemaError("duplicate divergence id " + div.id);
    div.boomer_ref = ref_field(d, "boomer_ref");
    div.doomer_ref = ref_field(d, "doomer_ref");
    if (!boomer.contains(div.boomer_ref)) throw UnknownNode(div.boomer_ref.str() + " (boomer chain)");
    if (!doomer.contains(div.doomer_ref)) throw UnknownNode(div.doomer_ref.str() + " (doomer chain)");
    const json& primary = d.value("primary", json());
    if (primary.is_string() && (primary == "boomer" || primary == "doomer")) div.primary = primary.get<std::string>();
    std::optional<PremiseType> stated;
    const json& type = d.value("type", json());
    if (type.is_string()) stated = normalize_premise_type(type.get<std::string>());
    div.dtype = divergence_type(boomer, doomer, div.boomer_ref, div.doomer_ref, div.primary, stated, rule);
    div.llm_depends_on = string_list(d, "depends_on");
    div.rationale = d.value("rationale", "");
    out.divergences.push_back(std::move(div));
  }
  for (const auto& d : out.divergences) {
    for (const auto& dep : d.llm_depends_on) {
      if (!ids.count(dep)) throw SchemaError("divergence " + d.id + " depends on unknown id " + dep);
    }
  }
  const json& root = payload.value("root", json());
  if (root.is_string()) out.root = root.get<std::string>();
  return out;
}

namespace {

// Root of a payload as (boomer_ref, doomer_ref) after the deterministic pass.
std::optional<std::pair<RefLabel, RefLabel>> payload_root(const json& payload, const ReasoningChain& boomer,
                                                          const ReasoningChain& doomer, const ChainDag& bd,
                                                          const ChainDag& dd, const DtypeRule& rule) {
  if (payload.is_null()) return std::nullopt;
  try {
    const auto parsed = parse_analysis(payload, boomer, doomer, rule);
    if (!parsed.is_disagreement) return std::nullopt;
    const auto& d = parsed.divergences[find_root(parsed.divergences, bd, dd).index];
    return std::make_pair(d.boomer_ref, d.doomer_ref);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

json verdict(const json& payload, const ReasoningChain& boomer, const ReasoningChain& doomer, const ChainDag& bd,
             const ChainDag& dd, const DtypeRule& rule) {
  if (payload.is_null()) return json();
  const auto root = payload_root(payload, boomer, doomer, bd, dd, rule);
  return {{"is_disagreement", payload.value("is_disagreement", false)},
          {"root", root ? json::array({root->first.str(), root->second.str()}) : json()}};
}

}  // namespace

DisagreementResult analyze_pair(const ChainPair& pair, const ReasoningChain& boomer, const ReasoningChain& doomer,
                                const EnsembleConfig& config, const DtypeRule& rule) {
  const ChainDag bd = build_dag(boomer);
  const ChainDag dd = build_dag(doomer);
  const json boomer_doc = chain_to_json(boomer);
  const json doomer_doc = chain_to_json(doomer);
  const json input = {{"topic_id", pair.topic_id},
                      {"pair_key", pair.pair_key()},
                      {"boomer", {{"key", pair.boomer_key}, {"chain", boomer_doc}}},
                      {"doomer", {{"key", pair.doomer_key}, {"chain", doomer_doc}}}};
  const std::string schema = config.prompts.get("disagree.schema");
  const std::map<std::string, std::string> chain_vars = {{"topic", pair.topic_id},
                                                         {"boomer_key", pair.boomer_key},
                                                         {"doomer_key", pair.doomer_key},
                                                         {"boomer_chain", boomer_doc.dump(2)},
                                                         {"doomer_chain", doomer_doc.dump(2)}};
  const PayloadChecker check = [&](const json& payload) {
    try {
      parse_analysis(payload, boomer, doomer, rule);
      return PayloadCheck::ok();
    } catch (const UnknownNode& e) {
      return PayloadCheck::structural(std::string("V2 unresolved reference: ") + e.what());
    } catch (const ValidationError& e) {
      return PayloadCheck::schema(e.what());
    }
  };

  EnsembleProtocol protocol;
  protocol.equivalent = [&](const json& a, const json& b) {
    if (a.value("is_disagreement", false) != b.value("is_disagreement", false)) return false;
    return payload_root(a, boomer, doomer, bd, dd, rule) == payload_root(b, boomer, doomer, bd, dd, rule);
  };
  protocol.worker = [&](RoleSession& s, const json&) {
    auto vars = chain_vars;
    vars["schema"] = schema;
    return s.ask_json(config.prompts.get("disagree.worker.system"), config.prompts.render("disagree.worker.user", vars),
                      schema, check);
  };
  protocol.integrate = [&](RoleSession& s, const json&, const json& a, const json& b, json& trace) {
    const std::string system = config.prompts.get("disagree.integrator.system");
    const json ctx = {{"worker_a", a}, {"worker_b", b}};
    auto vars = chain_vars;
    vars["analysis_a"] = a.is_null() ? "(this analyst produced no usable output)" : a.dump(2);
    vars["analysis_b"] = b.is_null() ? "(this analyst produced no usable output)" : b.dump(2);
    const json comparison = s.ask_json(
        system, config.prompts.render("disagree.integrator.compare", vars),
        R"({"comparison": {"agree_on_disagreement": true, "notes": "..."}})",
        [](const json& p) {
          auto it = p.find("comparison");
          return it != p.end() && it->is_object() ? PayloadCheck::ok()
                                                  : PayloadCheck::schema("expected an object field 'comparison'");
        },
        ctx);
    trace.push_back({{"step", "compare"}, {"output", comparison}});
    vars["comparison"] = comparison.dump(2);
    vars["schema"] = schema;
    return s.ask_json(system, config.prompts.render("disagree.integrator.synthesize", vars), schema, check, ctx);
  };

  DisagreementResult result;
  result.record = run_ensemble_task(TaskKind::Disagree, input, config, protocol);
  DisagreementReport& r = result.report;
  r.pair = pair;
  ParsedAnalysis parsed = parse_analysis(result.record.integrated_out, boomer, doomer, rule);
  r.is_disagreement = parsed.is_disagreement;
  r.divergences = std::move(parsed.divergences);
  r.llm_root = parsed.root;
  if (r.is_disagreement) {
    compute_dependencies(r.divergences, bd, dd);
    const RootChoice choice = find_root(r.divergences, bd, dd);
    r.root = r.divergences[choice.index].id;
    r.minimal_count = choice.minimal_count;
    r.dependency_cycle = choice.dependency_cycle;
    r.root_mismatch = r.llm_root != r.root;
    if (r.root_mismatch) {
      log_info(pair.pair_key() + ": model named root " + r.llm_root.value_or("(none)") + ", dependency check gives " +
               *r.root);
    }
    if (choice.minimal_count > 1) {
      log_info(pair.pair_key() + ": " + std::to_string(choice.minimal_count) +
               " independent divergences; tie-break chose " + *r.root);
    }
  }
  r.agreement = result.record.agreement.value_or(AgreementOutcome::R3);
  r.votes = {{"worker_a", verdict(result.record.worker_a_out, boomer, doomer, bd, dd, rule)},
             {"worker_b", verdict(result.record.worker_b_out, boomer, doomer, bd, dd, rule)},
             {"integrator", verdict(result.record.integrated_out, boomer, doomer, bd, dd, rule)}};
  return result;
}

// ---------------------------------------------------------------------------
// Distributions and consistency
// ---------------------------------------------------------------------------

RootTypeDistribution root_type_distribution(std::span<const DisagreementReport> reports) {
  RootTypeDistribution d;
  for (const auto& r : reports) {
    if (!r.is_disagreement) continue;
    const Divergence* root = r.root_divergence();
    if (!root) throw SchemaError("report " + r.pair.pair_key() + " has a disagreement but no root");
    ++d.counts[index_of(root->dtype)];
    ++d.n;
  }
  if (d.n == 0) throw EmptyInput("no disagreeing pairs");
  for (std::size_t t = 0; t < 5; ++t) d.probabilities[t] = static_cast<double>(d.counts[t]) / static_cast<double>(d.n);
  return d;
}

json to_json(const RootTypeDistribution& d) {
  json counts = json::object();
  json probs = json::object();
  for (PremiseType t : kPremiseTypes) {
    counts[std::string(to_string(t))] = d.counts[index_of(t)];
    probs[std::string(to_string(t))] = d.probabilities[index_of(t)];
  }
  return {{"n", d.n}, {"counts", counts}, {"probabilities", probs}};
}

DisagreementConsistency disagreement_consistency(std::span<const DisagreementReport> reports) {
  DisagreementConsistency c;
  for (const auto& r : reports) {
    ++c.pairs;
    const json& a = r.votes.value("worker_a", json());
    const json& b = r.votes.value("worker_b", json());
    const json& f = r.votes.value("integrator", json());
    const bool final_dis = r.is_disagreement;
    const bool all_present = !a.is_null() && !b.is_null();
    if (all_present && a.at("is_disagreement") == final_dis && b.at("is_disagreement") == final_dis) {
      ++(final_dis ? c.all_disagree : c.all_no_disagreement);
    } else {
      ++c.partial;
    }
    if (!final_dis) continue;
    ++c.disagreement_pairs;
    auto root_of = [](const json& v) {
      return v.is_null() || v.at("root").is_null() ? std::optional<json>() : std::optional<json>(v.at("root"));
    };
    const json final_root = f.is_null() ? json() : f.at("root");
    switch (classify_agreement(root_of(a), root_of(b), final_root, [](const json& x, const json& y) { return x == y; })) {
      case AgreementOutcome::R3: ++c.root_three_way; break;
      case AgreementOutcome::R2MatchesA: ++c.root_a_only; break;
      case AgreementOutcome::R2MatchesB: ++c.root_b_only; break;
      case AgreementOutcome::R1: ++c.root_integrator_only; break;
    }
  }
  return c;
}

json to_json(const DisagreementConsistency& c) {
  auto share = [](std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
  return {{"total_pairs", c.pairs},
          {"disagreement_identification",
           {{"all_3_disagreement", {{"count", c.all_disagree}, {"share", share(c.all_disagree, c.pairs)}}},
            {"all_3_no_disagreement",
             {{"count", c.all_no_disagreement}, {"share", share(c.all_no_disagreement, c.pairs)}}},
            {"partial_2_of_3", {{"count", c.partial}, {"share", share(c.partial, c.pairs)}}}}},
          {"root_identification",
           {{"disagreement_pairs", c.disagreement_pairs},
            {"three_way", {{"count", c.root_three_way}, {"share", share(c.root_three_way, c.disagreement_pairs)}}},
            {"integrator_with_a_only",
             {{"count", c.root_a_only}, {"share", share(c.root_a_only, c.disagreement_pairs)}}},
            {"integrator_with_b_only",
             {{"count", c.root_b_only}, {"share", share(c.root_b_only, c.disagreement_pairs)}}},
            {"introduced_by_integrator",
             {{"count", c.root_integrator_only}, {"share", share(c.root_integrator_only, c.disagreement_pairs)}}}}}};
}

}  // namespace peel
