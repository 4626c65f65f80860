#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace peel {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

// Lowercase with every whitespace run collapsed to one space and the ends
// trimmed. Used for case-insensitive label identity.
std::string normalize_label(std::string_view s);

// Lowercase ASCII alphanumerics joined by '-', for file names.
std::string slugify(std::string_view s);

std::vector<std::string> split_sentences(std::string_view text);

bool contains_any(std::string_view haystack_lower, const std::vector<std::string_view>& needles);

}  // namespace peel
