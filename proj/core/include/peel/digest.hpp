#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace peel {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Sorted keys, no insignificant whitespace. Semantically identical documents
/// serialize identically.
std::string canonical_json(const nlohmann::json& doc);

std::string digest_json(const nlohmann::json& doc);

}  // namespace peel
