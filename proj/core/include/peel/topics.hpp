#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"
#include "peel/ensemble.hpp"

namespace peel {

inline constexpr std::string_view kNonAiTopic = "Non-AI topic";
inline constexpr std::string_view kUnassignedTheme = "Unassigned";

enum class TopicOrigin { Seed, ModelCreated };

struct TopicEntry {
  std::string topic_id;
  std::string label;
  std::string theme;
  TopicOrigin origin = TopicOrigin::Seed;
  int revision_added = 0;

  friend bool operator==(const TopicEntry&, const TopicEntry&) = default;
};

/// Append-only topic list. Labels are unique after case folding and
/// whitespace collapse; each accepted new topic bumps the revision.
class TopicList {
 public:
  /// The bundled initial list, revision 0.
  static TopicList seeded();
  static TopicList from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  int revision() const noexcept { return revision_; }
  const std::vector<TopicEntry>& entries() const noexcept { return entries_; }
  std::vector<std::string> themes() const;

  const TopicEntry* find_id(std::string_view topic_id) const;
  const TopicEntry* find_label(std::string_view label) const;

  /// Existing entry for the label, or a new model-created one at revision + 1.
  const TopicEntry& add(const std::string& label, const std::string& theme);

 private:
  void push(TopicEntry entry);

  int revision_ = 0;
  std::vector<TopicEntry> entries_;
};

struct ConclusionInput {
  std::string key;
  std::string text;
  std::vector<std::string> premises;  // context only
};

/// "<episode>/<speaker>/<chain index from 1>/<conclusion id>".
std::string conclusion_key(const ReasoningChain& chain, std::size_t chain_index, const Conclusion& conclusion);
ConclusionInput conclusion_input(const ReasoningChain& chain, std::size_t chain_index, const Conclusion& conclusion);

/// One model's answer, with the label resolved against the list revision it
/// was given (topic_id empty when it names a topic not on the list).
struct TopicVote {
  std::string label;
  std::string topic_id;
  std::string theme;
  Attitude attitude = Attitude::Neutral;

  bool proposes_new() const noexcept { return topic_id.empty(); }
  // Identity of the chosen topic: id when listed, folded label otherwise.
  std::string topic_key() const;
};

struct ClassifiedConclusion {
  std::string key;
  std::string topic_id;
  std::string topic_label;
  Attitude attitude = Attitude::Neutral;
  bool is_ai_risk = true;
  int list_revision = 0;  // revision the votes were cast against
  std::optional<TopicVote> vote_a;
  std::optional<TopicVote> vote_b;
  TopicVote vote_final;
  bool workers_equivalent = false;
  bool created_topic = false;
  AgreementOutcome topic_agreement = AgreementOutcome::R3;
  AgreementOutcome attitude_agreement = AgreementOutcome::R3;
};

nlohmann::json to_json(const ClassifiedConclusion& c);
ClassifiedConclusion classified_from_json(const nlohmann::json& doc);

struct ClassificationResult {
  ClassifiedConclusion classified;
  EnsembleTaskRecord record;
};

/// Both workers vote against the list's current revision; the integrator
/// reconciles. A final topic not on the list is appended. Throws
/// MalformedOutput.
ClassificationResult assign_topic_attitude(const ConclusionInput& conclusion, TopicList& topics,
                                           const EnsembleConfig& config);

struct ShareRow {
  std::string row;
  std::size_t count = 0;
  double share = 0.0;
};

/// Consistency breakdown in three blocks: AI vs non-AI, topic assignment
/// (over AI-risk conclusions) and attitude. Shares within a block sum to 1
/// unless the block is empty.
struct AgreementTable {
  std::size_t conclusions = 0;
  std::size_t ai_conclusions = 0;
  std::vector<ShareRow> ai_vs_non_ai;
  std::vector<ShareRow> topic;
  std::vector<ShareRow> attitude;
};

AgreementTable agreement_table(std::span<const ClassifiedConclusion> classified);
nlohmann::json to_json(const AgreementTable& table);
std::string agreement_table_csv(const AgreementTable& table);

}  // namespace peel
