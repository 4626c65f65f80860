#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peel/label.hpp"
#include "peel/relation.hpp"

namespace peel {

enum class PremiseType : std::uint8_t { Factual, Forecast, Causal, Definitional, Moral };

inline constexpr std::array<PremiseType, 5> kPremiseTypes = {
    PremiseType::Factual, PremiseType::Forecast, PremiseType::Causal, PremiseType::Definitional,
    PremiseType::Moral};

inline constexpr std::size_t index_of(PremiseType t) noexcept { return static_cast<std::size_t>(t); }

std::string_view to_string(PremiseType type) noexcept;

/// Maps free-text type labels onto the five canonical types. Case-insensitive,
/// surrounding whitespace ignored. Aliases: moral_outcome, moral_action,
/// evaluative -> moral; prediction -> forecast; fact -> factual.
/// Throws UnknownPremiseType.
PremiseType normalize_premise_type(std::string_view raw);

// Written in documents for premises whose type has not been settled yet
// (derived premises that only appear as implication targets).
inline constexpr std::string_view kPendingTypeLabel = "unspecified-pending-validation";

enum class Explicitness : std::uint8_t { Explicit, Implicit };
std::string_view to_string(Explicitness e) noexcept;
std::optional<Explicitness> explicitness_from_string(std::string_view text) noexcept;

enum class Attitude : std::uint8_t { Optimistic, Neutral, Pessimistic };
std::string_view to_string(Attitude a) noexcept;
std::optional<Attitude> attitude_from_string(std::string_view text) noexcept;

enum class Profession : std::uint8_t {
  Academic,
  CreativeMediaPublicFigure,
  IndustryTechExecutive,
  MixedAcademicIndustry,
  PublicPolicyGovMilitary,
  TechResearcherPractitioner,
  Other,
};
std::string_view to_string(Profession p) noexcept;
std::optional<Profession> profession_from_string(std::string_view text) noexcept;

enum class Gender : std::uint8_t { Female, Male, Unspecified };
std::string_view to_string(Gender g) noexcept;
std::optional<Gender> gender_from_string(std::string_view text) noexcept;

struct Premise {
  RefLabel id;
  std::string text;
  // nullopt only for derived premises still awaiting a type.
  std::optional<PremiseType> type;
  Explicitness explicitness = Explicitness::Explicit;
  int confidence = 100;

  friend bool operator==(const Premise&, const Premise&) = default;
};

struct Conclusion {
  RefLabel id;
  std::string text;
  std::optional<std::string> topic;
  std::optional<Attitude> attitude;

  friend bool operator==(const Conclusion&, const Conclusion&) = default;
};

// Speakers are keyed by (name, episode).
struct SpeakerMeta {
  std::string name;
  std::optional<Profession> profession;
  Gender gender = Gender::Unspecified;

  friend bool operator==(const SpeakerMeta&, const SpeakerMeta&) = default;
};

struct ReasoningChain {
  SpeakerMeta speaker;
  std::string episode;
  std::vector<Conclusion> conclusions;
  std::vector<Premise> premises;
  std::vector<Relationship> relationships;
  std::vector<Premise> derived_premises;

  const Premise* find_premise(RefLabel id) const noexcept;
  const Relationship* find_relationship(RefLabel id) const noexcept;
  const Conclusion* find_conclusion(RefLabel id) const noexcept;
  bool contains(RefLabel id) const noexcept;

  friend bool operator==(const ReasoningChain&, const ReasoningChain&) = default;
};

/// Adds a derived premise for every P-label that a relationship targets but
/// the premise list lacks. Existing derived premises are kept.
void materialize_derived_premises(ReasoningChain& chain);

/// Copy with every gloss cleared and all lists sorted by id; two chains are
/// structurally equivalent when their normal forms compare equal.
ReasoningChain without_glosses(const ReasoningChain& chain);
bool structurally_equal_modulo_gloss(const ReasoningChain& a, const ReasoningChain& b);

struct TypeSplit {
  std::size_t explicit_count = 0;
  std::size_t implicit_count = 0;
  std::size_t total() const noexcept { return explicit_count + implicit_count; }
};

struct EnthymemeStats {
  std::array<TypeSplit, 5> by_type{};
  std::size_t explicit_total = 0;
  std::size_t implicit_total = 0;
  // Derived premises without a settled type are not counted above.
  std::size_t untyped = 0;

  std::size_t total() const noexcept { return explicit_total + implicit_total; }
  double implicit_share() const noexcept;
  double explicit_share() const noexcept;
  double type_share(PremiseType t) const noexcept;
  bool is_enthymeme() const noexcept { return implicit_total > 0; }
};

/// Explicit/implicit premise counts per type over the listed premises.
EnthymemeStats enthymeme_stats(const ReasoningChain& chain);

}  // namespace peel
