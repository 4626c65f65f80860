#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peel/label.hpp"

namespace peel {

enum class RelationKind { Combine, Imply, Evaluate };

// How a combination reads its operands. The notation never says, so parsing
// always yields Unspecified; the flag exists for curated data.
enum class CombineMode { Unspecified, Conjunctive, Disjunctive };

std::string_view to_string(RelationKind kind) noexcept;
std::string_view to_string(CombineMode mode) noexcept;
std::optional<CombineMode> combine_mode_from_string(std::string_view text) noexcept;

/// One operator expression of a reasoning chain.
///
/// Arity: combine has >= 2 operands and an optional premise target
/// (`P1 + P2 => P32`); imply has exactly one operand and a required target;
/// evaluate has exactly two operands and no target.
struct Relationship {
  RefLabel id;
  RelationKind kind = RelationKind::Combine;
  std::vector<RefLabel> operands;
  std::optional<RefLabel> target;
  std::optional<std::string> gloss;
  CombineMode mode = CombineMode::Unspecified;

  friend bool operator==(const Relationship&, const Relationship&) = default;
};

/// Empty when the arity rules hold, otherwise a description of the violation.
std::optional<std::string> arity_violation(const Relationship& rel);

/// Parses one relationship line.
///
///   RELDEF  := RLabel ':' EXPR [IMP TARGET] [GLOSSSEP text]
///   EXPR    := OPERAND ('+' OPERAND)* | OPERAND EVAL OPERAND
///   IMP     := '⇒' | '=>'        EVAL := '∧' | '^'
///   GLOSSSEP:= '→' | '->' | ','
///
/// A lone operand followed by IMP is an implication; `A + B => Pk` is a
/// combination with a premise target. Throws ParseError (byte offset plus the
/// expected-token set) or MixedOperators.
Relationship parse_relation(std::string_view line);

/// Canonical ASCII form: single spaces, `=>` and `^`, gloss after ` -> `.
/// Non-ASCII gloss characters are written as `\uXXXX` escapes, which
/// parse_relation decodes again.
std::string serialize_relation(const Relationship& rel);

}  // namespace peel
