#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"

namespace peel {

using json = nlohmann::json;

inline constexpr std::string_view kChainSchemaVersion = "1";

/// Canonical chain document:
///
///   { "schema_version": "1", "speaker": {name, profession, gender}, "episode",
///     "conclusions":   [{id, text, topic, attitude}],
///     "premises":      [{id, text, type, explicitness, confidence}],
///     "relationships": [{id, expr, gloss, mode?}],
///     "derived_premises": [...same shape as premises...] }
///
/// `expr` is the operator expression without the label, e.g. "P1 + P2 => P32".
json chain_to_json(const ReasoningChain& chain);

/// Reads a chain document (speaker may also be a bare name string). Derived
/// premises are materialized for implication targets missing from the
/// premise list. Throws SchemaError, UnknownPremiseType, ParseError,
/// MixedOperators.
ReasoningChain chain_from_json(const json& doc);

/// Accepts a single chain, an array of chains, or {"chains": [...]}.
std::vector<ReasoningChain> chains_from_json(const json& doc);
json chains_to_json(const std::vector<ReasoningChain>& chains);

ReasoningChain load_chain_file(const std::filesystem::path& path);

json speaker_to_json(const SpeakerMeta& speaker);
SpeakerMeta speaker_from_json(const json& doc);

}  // namespace peel
