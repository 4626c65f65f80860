#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"

namespace peel {

enum class ViolationCode {
  V1_DuplicateId,
  V2_UnresolvedRef,
  V3_Cycle,
  V4_UnsupportedConclusion,
  V5_OrphanPremise,
  V6_EvalNotMoral,
  V7_ConfidenceRange,
  V8_BadArity,
};

enum class Severity { Warning, Error };

std::string_view to_string(ViolationCode code) noexcept;
std::string_view to_string(Severity severity) noexcept;
std::optional<ViolationCode> violation_code_from_string(std::string_view text) noexcept;

/// V5 is the only warning.
Severity severity_of(ViolationCode code) noexcept;

struct Violation {
  ViolationCode code;
  Severity severity;
  RefLabel subject;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::string chain_id;
  std::vector<Violation> violations;  // ordered by code, then subject
  bool is_valid = true;               // no error-severity violation

  bool has(ViolationCode code) const noexcept;
  std::vector<ViolationCode> error_codes() const;
};

std::string chain_id(const ReasoningChain& chain);

/// Structural checks V1-V8 over one chain. Never throws on bad chains.
ValidationReport validate_chain(const ReasoningChain& chain);

/// Only the listed codes; the extraction stage re-asks on V1-V3 and V7-V8.
ValidationReport validate_chain(const ReasoningChain& chain, std::initializer_list<ViolationCode> codes);

nlohmann::json report_to_json(const ValidationReport& report);

struct GapSite {
  RefLabel site;
  std::string detail;
  friend bool operator==(const GapSite&, const GapSite&) = default;
};

/// Conclusions whose whole support consists of explicit factual/forecast
/// premises with no evaluation anywhere upstream: an is-to-ought jump that
/// usually hides an unstated value premise. Structural only.
std::vector<GapSite> coherence_gap_report(const ReasoningChain& chain);

}  // namespace peel
