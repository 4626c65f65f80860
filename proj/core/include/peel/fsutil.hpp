#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace peel {

/// Whole file as bytes. Throws UsageError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a unique temporary sibling, then renames over `path`, so
/// readers never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace peel
