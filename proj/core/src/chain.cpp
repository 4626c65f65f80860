#include "peel/chain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include "peel/error.hpp"
#include "peel/text.hpp"

namespace peel {

CycleDetected::CycleDetected(std::vector<std::string> cycle)
    : ValidationError([&] {
        std::string msg = "reference cycle:";
        for (const auto& n : cycle) msg += " " + n;
        return msg;
      }()),
      cycle_(std::move(cycle)) {}

ParseError::ParseError(std::size_t offset, std::vector<std::string> expected,
                       const std::string& input)
    : ValidationError([&] {
        std::string msg = "parse error at byte " + std::to_string(offset) + " of '" + input +
                          "': expected one of {";
        for (std::size_t i = 0; i < expected.size(); ++i) {
          if (i) msg += ", ";
          msg += expected[i];
        }
        return msg + "}";
      }()),
      offset_(offset),
      expected_(std::move(expected)) {}

char kind_letter(LabelKind kind) noexcept {
  switch (kind) {
    case LabelKind::Premise: return 'P';
    case LabelKind::Relationship: return 'R';
    case LabelKind::Conclusion: return 'C';
  }
  return '?';
}

RefLabel::RefLabel(LabelKind kind, std::uint32_t index) : kind_(kind), index_(index) {
  if (index == 0) throw ValidationError("reference label index must be >= 1");
}

std::optional<RefLabel> RefLabel::parse(std::string_view text) {
  if (text.size() < 2) return std::nullopt;
  LabelKind kind;
  switch (text.front()) {
    case 'P': kind = LabelKind::Premise; break;
    case 'R': kind = LabelKind::Relationship; break;
    case 'C': kind = LabelKind::Conclusion; break;
    default: return std::nullopt;
  }
  std::uint32_t index = 0;
  const char* first = text.data() + 1;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec != std::errc{} || ptr != last || index == 0 || text[1] == '+') return std::nullopt;
  return RefLabel(kind, index);
}

std::string RefLabel::str() const { return kind_letter(kind_) + std::to_string(index_); }

std::string_view to_string(PremiseType type) noexcept {
  switch (type) {
    case PremiseType::Factual: return "factual";
    case PremiseType::Forecast: return "forecast";
    case PremiseType::Causal: return "causal";
    case PremiseType::Definitional: return "definitional";
    case PremiseType::Moral: return "moral";
  }
  return "?";
}

PremiseType normalize_premise_type(std::string_view raw) {
  static const std::map<std::string, PremiseType, std::less<>> aliases = {
      {"factual", PremiseType::Factual},
      {"fact", PremiseType::Factual},
      {"forecast", PremiseType::Forecast},
      {"prediction", PremiseType::Forecast},
      {"causal", PremiseType::Causal},
      {"definitional", PremiseType::Definitional},
      {"moral", PremiseType::Moral},
      {"moral_outcome", PremiseType::Moral},
      {"moral_action", PremiseType::Moral},
      {"evaluative", PremiseType::Moral},
  };
  const std::string key = to_lower(trim(raw));
  if (auto it = aliases.find(key); it != aliases.end()) return it->second;
  throw UnknownPremiseType(std::string(raw));
}

std::string_view to_string(Explicitness e) noexcept {
  return e == Explicitness::Explicit ? "explicit" : "implicit";
}

std::optional<Explicitness> explicitness_from_string(std::string_view text) noexcept {
  const auto key = to_lower(trim(text));
  if (key == "explicit") return Explicitness::Explicit;
  if (key == "implicit") return Explicitness::Implicit;
  return std::nullopt;
}

std::string_view to_string(Attitude a) noexcept {
  switch (a) {
    case Attitude::Optimistic: return "optimistic";
    case Attitude::Neutral: return "neutral";
    case Attitude::Pessimistic: return "pessimistic";
  }
  return "?";
}

std::optional<Attitude> attitude_from_string(std::string_view text) noexcept {
  const auto key = to_lower(trim(text));
  if (key == "optimistic") return Attitude::Optimistic;
  if (key == "neutral") return Attitude::Neutral;
  if (key == "pessimistic") return Attitude::Pessimistic;
  return std::nullopt;
}

namespace {

constexpr std::array<std::pair<Profession, std::string_view>, 7> kProfessionNames = {{
    {Profession::Academic, "Academic"},
    {Profession::CreativeMediaPublicFigure, "Creative / Media / Public Figure"},
    {Profession::IndustryTechExecutive, "Industry / Tech Executive"},
    {Profession::MixedAcademicIndustry, "Mixed Academic-Industry"},
    {Profession::PublicPolicyGovMilitary, "Public / Policy / Gov / Military"},
    {Profession::TechResearcherPractitioner, "Tech Researcher / Practitioner"},
    {Profession::Other, "Other"},
}};

// Lowercase alphanumerics only, so "Mixed Academic–Industry" and
// "mixed_academic_industry" land on the same key.
std::string profession_key(std::string_view text) {
  std::string key;
  for (unsigned char c : text) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  return key;
}

}  // namespace

std::string_view to_string(Profession p) noexcept {
  for (const auto& [value, name] : kProfessionNames) {
    if (value == p) return name;
  }
  return "?";
}

std::optional<Profession> profession_from_string(std::string_view text) noexcept {
  const auto key = profession_key(text);
  for (const auto& [value, name] : kProfessionNames) {
    if (profession_key(name) == key) return value;
  }
  return std::nullopt;
}

std::string_view to_string(Gender g) noexcept {
  switch (g) {
    case Gender::Female: return "female";
    case Gender::Male: return "male";
    case Gender::Unspecified: return "unspecified";
  }
  return "?";
}

std::optional<Gender> gender_from_string(std::string_view text) noexcept {
  const auto key = to_lower(trim(text));
  if (key == "female" || key == "f") return Gender::Female;
  if (key == "male" || key == "m") return Gender::Male;
  if (key.empty() || key == "unspecified") return Gender::Unspecified;
  return std::nullopt;
}

const Premise* ReasoningChain::find_premise(RefLabel id) const noexcept {
  for (const auto& p : premises) {
    if (p.id == id) return &p;
  }
  for (const auto& p : derived_premises) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const Relationship* ReasoningChain::find_relationship(RefLabel id) const noexcept {
  for (const auto& r : relationships) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

const Conclusion* ReasoningChain::find_conclusion(RefLabel id) const noexcept {
  for (const auto& c : conclusions) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

bool ReasoningChain::contains(RefLabel id) const noexcept {
  switch (id.kind()) {
    case LabelKind::Premise: return find_premise(id) != nullptr;
    case LabelKind::Relationship: return find_relationship(id) != nullptr;
    case LabelKind::Conclusion: return find_conclusion(id) != nullptr;
  }
  return false;
}

void materialize_derived_premises(ReasoningChain& chain) {
  for (const auto& rel : chain.relationships) {
    if (!rel.target || rel.target->kind() != LabelKind::Premise) continue;
    if (chain.find_premise(*rel.target)) continue;
    Premise derived;
    derived.id = *rel.target;
    derived.text = rel.gloss.value_or("derived from " + rel.id.str());
    derived.type = std::nullopt;
    derived.explicitness = Explicitness::Implicit;
    derived.confidence = 100;
    chain.derived_premises.push_back(std::move(derived));
  }
  std::sort(chain.derived_premises.begin(), chain.derived_premises.end(),
            [](const Premise& a, const Premise& b) { return a.id < b.id; });
}

ReasoningChain without_glosses(const ReasoningChain& chain) {
  ReasoningChain out = chain;
  for (auto& rel : out.relationships) rel.gloss.reset();
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(out.premises.begin(), out.premises.end(), by_id);
  std::sort(out.derived_premises.begin(), out.derived_premises.end(), by_id);
  std::sort(out.relationships.begin(), out.relationships.end(), by_id);
  std::sort(out.conclusions.begin(), out.conclusions.end(), by_id);
  // Derived premise text is copied from glosses, so it is gloss too.
  for (auto& p : out.derived_premises) p.text.clear();
  return out;
}

bool structurally_equal_modulo_gloss(const ReasoningChain& a, const ReasoningChain& b) {
  return without_glosses(a) == without_glosses(b);
}

double EnthymemeStats::implicit_share() const noexcept {
  return total() == 0 ? 0.0 : static_cast<double>(implicit_total) / static_cast<double>(total());
}

double EnthymemeStats::explicit_share() const noexcept {
  return total() == 0 ? 0.0 : static_cast<double>(explicit_total) / static_cast<double>(total());
}

double EnthymemeStats::type_share(PremiseType t) const noexcept {
  return total() == 0 ? 0.0
                      : static_cast<double>(by_type[index_of(t)].total()) /
                            static_cast<double>(total());
}

EnthymemeStats enthymeme_stats(const ReasoningChain& chain) {
  EnthymemeStats stats;
  for (const auto& p : chain.premises) {
    if (!p.type) {
      ++stats.untyped;
      continue;
    }
    auto& split = stats.by_type[index_of(*p.type)];
    if (p.explicitness == Explicitness::Explicit) {
      ++split.explicit_count;
      ++stats.explicit_total;
    } else {
      ++split.implicit_count;
      ++stats.implicit_total;
    }
  }
  return stats;
}

}  // namespace peel
