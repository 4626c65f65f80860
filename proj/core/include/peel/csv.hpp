#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace peel {

// RFC 4180: fields containing comma, quote, CR or LF are quoted and inner
// quotes doubled; records end in CRLF.
std::string csv_field(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

/// Parses RFC 4180 text (CRLF or LF line ends). Throws FormatError on an
/// unterminated quoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace peel
