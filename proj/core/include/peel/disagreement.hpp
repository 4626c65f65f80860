#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"
#include "peel/dag.hpp"
#include "peel/ensemble.hpp"
#include "peel/topics.hpp"

namespace peel {

struct ChainPair {
  std::string topic_id;
  std::string boomer_key;  // optimistic conclusion
  std::string doomer_key;  // pessimistic conclusion

  /// File-name-safe and unique per (boomer, doomer).
  std::string pair_key() const;
  friend bool operator==(const ChainPair&, const ChainPair&) = default;
};

/// Optimistic x pessimistic conclusions on the topic, boomers in input order
/// outermost. Neutral and non-AI conclusions never pair.
std::vector<ChainPair> enumerate_pairs(const std::string& topic_id, std::span<const ClassifiedConclusion> classified);

struct Divergence {
  std::string id;
  RefLabel boomer_ref;
  RefLabel doomer_ref;
  PremiseType dtype = PremiseType::Factual;
  std::vector<std::string> depends_on;      // recomputed from the two chains
  std::vector<std::string> llm_depends_on;  // as the model stated them
  std::optional<std::string> primary;       // "boomer" | "doomer"
  std::string rationale;

  friend bool operator==(const Divergence&, const Divergence&) = default;
};

/// Type assigned to a divergence whose two sides have different premise
/// types and no side is named primary: the first listed type wins.
struct DtypeRule {
  std::array<PremiseType, 5> precedence = {PremiseType::Definitional, PremiseType::Causal, PremiseType::Factual,
                                           PremiseType::Forecast, PremiseType::Moral};
};

/// Canonical divergence type from the referenced premises. Relationship or
/// untyped refs fall back to `stated` (the model's own label).
PremiseType divergence_type(const ReasoningChain& boomer, const ReasoningChain& doomer, RefLabel boomer_ref,
                            RefLabel doomer_ref, const std::optional<std::string>& primary,
                            std::optional<PremiseType> stated, const DtypeRule& rule = {});

/// A depends on B when A's boomer ref descends from B's boomer ref in the
/// boomer DAG, or likewise on the doomer side.
bool depends_on(const Divergence& a, const Divergence& b, const ChainDag& boomer, const ChainDag& doomer);

struct RootChoice {
  std::size_t index = 0;           // into the divergence list
  std::size_t minimal_count = 0;   // candidates before the tie-break
  bool dependency_cycle = false;   // the root sits in a mutual-dependency group
};

/// Candidates are divergences whose dependencies all lead back to themselves
/// (no dependencies at all unless dependencies are mutual). Ties go to the
/// smallest combined node depth, then to (boomer_ref, doomer_ref) in label
/// order, then to list order. Requires at least one divergence.
RootChoice find_root(std::span<const Divergence> divergences, const ChainDag& boomer, const ChainDag& doomer);

/// Fills depends_on for every divergence.
void compute_dependencies(std::vector<Divergence>& divergences, const ChainDag& boomer, const ChainDag& doomer);

struct DisagreementReport {
  ChainPair pair;
  bool is_disagreement = false;
  std::vector<Divergence> divergences;
  std::optional<std::string> root;
  std::optional<std::string> llm_root;
  bool root_mismatch = false;     // the model named a different root
  std::size_t minimal_count = 0;  // > 1 means the tie-break decided
  bool dependency_cycle = false;
  AgreementOutcome agreement = AgreementOutcome::R3;
  // Per-model verdicts for the consistency table; null when a worker failed.
  nlohmann::json votes;

  const Divergence* root_divergence() const;
};

nlohmann::json to_json(const DisagreementReport& r);
DisagreementReport report_from_json(const nlohmann::json& doc);

/// Parses a disagreement payload against the two chains. Throws
/// SchemaError for shape problems and UnknownNode for refs that resolve
/// to nothing.
struct ParsedAnalysis {
  bool is_disagreement = false;
  std::vector<Divergence> divergences;
  std::optional<std::string> root;
};
ParsedAnalysis parse_analysis(const nlohmann::json& payload, const ReasoningChain& boomer,
                              const ReasoningChain& doomer, const DtypeRule& rule = {});

struct DisagreementResult {
  DisagreementReport report;
  EnsembleTaskRecord record;
};

/// Ensemble disagreement analysis of one pair, normalized by find_root.
/// Throws MalformedOutput, BackendError.
DisagreementResult analyze_pair(const ChainPair& pair, const ReasoningChain& boomer, const ReasoningChain& doomer,
                                const EnsembleConfig& config, const DtypeRule& rule = {});

struct RootTypeDistribution {
  std::size_t n = 0;
  std::array<std::size_t, 5> counts{};
  std::array<double, 5> probabilities{};
};

/// Over reports with a disagreement; throws EmptyInput when there are none.
RootTypeDistribution root_type_distribution(std::span<const DisagreementReport> reports);
nlohmann::json to_json(const RootTypeDistribution& d);

/// Consistency of the three models on disagreement existence and on the
/// root, in rows with counts and shares.
struct DisagreementConsistency {
  std::size_t pairs = 0;
  std::size_t disagreement_pairs = 0;
  std::size_t all_disagree = 0;
  std::size_t all_no_disagreement = 0;
  std::size_t partial = 0;
  std::size_t root_three_way = 0;
  std::size_t root_a_only = 0;
  std::size_t root_b_only = 0;
  std::size_t root_integrator_only = 0;
};
DisagreementConsistency disagreement_consistency(std::span<const DisagreementReport> reports);
nlohmann::json to_json(const DisagreementConsistency& c);

}  // namespace peel
