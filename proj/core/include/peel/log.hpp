#pragma once

#include <string>
#include <string_view>

namespace peel {

// Thread-safe diagnostics on stderr. Levels: debug, info, warn, error, off.
void set_log_level(std::string_view level);
void log_debug(const std::string& message);
void log_info(const std::string& message);
void log_warn(const std::string& message);
void log_error(const std::string& message);

}  // namespace peel
