#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace peel {

/// Named prompt templates. Names are file stems, e.g. "extract.validate".
/// Placeholders are written `{{name}}`.
class PromptSet {
 public:
  /// The templates compiled into the library (prompts/v1).
  static PromptSet builtin();
  /// Every *.txt file in `dir`; the set label is the directory name.
  static PromptSet from_directory(const std::filesystem::path& dir);

  const std::string& label() const noexcept { return label_; }
  bool has(std::string_view name) const;
  /// Throws UsageError for an unknown template.
  const std::string& get(std::string_view name) const;

  /// Substitutes every placeholder. Throws UsageError when the template uses
  /// a variable that is not supplied.
  std::string render(std::string_view name, const std::map<std::string, std::string>& vars) const;

  /// "<label>:<12 hex digits>" over the templates of one task family
  /// ("extract", "classify", ...) plus the shared "common.*" templates.
  /// Editing any of them changes the version and hence every cache key.
  std::string version_for(std::string_view family) const;

  const std::map<std::string, std::string>& templates() const noexcept { return templates_; }

 private:
  std::string label_;
  std::map<std::string, std::string> templates_;
};

/// Seed data bundled with the library, keyed by path below core/.
const std::string& embedded_resource(std::string_view path);

}  // namespace peel
