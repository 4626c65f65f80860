#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peel/disagreement.hpp"
#include "peel/ensemble.hpp"

namespace peel {

struct CausalQuestion {
  std::string question_id;
  std::string text;
  std::array<std::string, 2> stances;
  int revision_added = 0;
  std::optional<std::string> theme;  // set only from the human theme file

  friend bool operator==(const CausalQuestion&, const CausalQuestion&) = default;
};

struct QuestionAssignment {
  std::string divergence_key;  // "<topic_id>/<pair_key>/<divergence id>"
  std::string question_id;
  std::string boomer_stance;
  std::string doomer_stance;
  int map_revision = 0;  // revision the votes were cast against
  bool created_question = false;
  AgreementOutcome agreement = AgreementOutcome::R3;
  nlohmann::json votes;

  friend bool operator==(const QuestionAssignment&, const QuestionAssignment&) = default;
};

/// Append-only list of core causal questions plus the assignments made
/// against it. Question texts are unique after case folding.
class ConflictMap {
 public:
  static ConflictMap from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  int revision() const noexcept { return revision_; }
  const std::vector<CausalQuestion>& questions() const noexcept { return questions_; }
  const std::vector<QuestionAssignment>& assignments() const noexcept { return assignments_; }

  const CausalQuestion* find_id(std::string_view id) const;
  const CausalQuestion* find_text(std::string_view text) const;

  /// Existing question with the same text, or a new one at revision + 1.
  /// Throws MalformedOutput unless the two stances are distinct.
  const CausalQuestion& add(const std::string& text, const std::array<std::string, 2>& stances);
  /// Throws SchemaError when the question does not resolve.
  void record(QuestionAssignment assignment);

 private:
  int revision_ = 0;
  std::vector<CausalQuestion> questions_;
  std::vector<QuestionAssignment> assignments_;
};

struct DivergenceInput {
  std::string key;
  Divergence divergence;
  std::string boomer_text;
  std::string doomer_text;
};

/// The report's root divergence with the text of both referenced nodes.
DivergenceInput root_divergence_input(const DisagreementReport& report, const ReasoningChain& boomer,
                                      const ReasoningChain& doomer);

struct AssignmentResult {
  QuestionAssignment assignment;
  EnsembleTaskRecord record;
};

/// Throws NotCausal for non-causal divergences, MalformedOutput.
AssignmentResult classify_divergence(const DivergenceInput& input, ConflictMap& map, const EnsembleConfig& config);

/// Share of assignments on which the integrator matched both workers'
/// question choice. Throws EmptyInput.
double consistency_rate(const ConflictMap& map);

/// question_id -> theme from a two-column CSV (optional header row).
std::map<std::string, std::string> load_theme_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_theme_csv(std::string_view text);

struct ThemeReport {
  std::size_t assignments = 0;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> shares;
};

/// Throws UnmappedQuestion for the first question (in map order) the theme
/// mapping lacks.
ThemeReport theme_report(const ConflictMap& map, const std::map<std::string, std::string>& themes);
nlohmann::json to_json(const ThemeReport& report);
std::string theme_report_csv(const ThemeReport& report);

}  // namespace peel
