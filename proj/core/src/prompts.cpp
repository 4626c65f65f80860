#include "peel/prompts.hpp"

#include <fstream>
#include <sstream>

#include "peel/digest.hpp"
#include "peel/error.hpp"

namespace peel {

namespace detail {
const std::map<std::string, std::string>& embedded_resources();
}

namespace {

constexpr std::string_view kBuiltinPrefix = "prompts/v1/";

}  // namespace

const std::string& embedded_resource(std::string_view path) {
  const auto& all = detail::embedded_resources();
  auto it = all.find(std::string(path));
  if (it == all.end()) throw UsageError("no embedded resource " + std::string(path));
  return it->second;
}

PromptSet PromptSet::builtin() {
  PromptSet set;
  set.label_ = "v1";
  for (const auto& [path, text] : detail::embedded_resources()) {
    if (path.rfind(kBuiltinPrefix, 0) != 0) continue;
    std::string name = path.substr(kBuiltinPrefix.size());
    if (name.size() > 4 && name.ends_with(".txt")) name.resize(name.size() - 4);
    set.templates_.emplace(std::move(name), text);
  }
  return set;
}

PromptSet PromptSet::from_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw UsageError("prompt directory not found: " + dir.string());
  PromptSet set;
  set.label_ = fs::absolute(dir).lexically_normal().filename().string();
  if (set.label_.empty()) set.label_ = "custom";
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    set.templates_.emplace(entry.path().stem().string(), buf.str());
  }
  if (set.templates_.empty()) throw UsageError("no *.txt templates in " + dir.string());
  return set;
}

bool PromptSet::has(std::string_view name) const { return templates_.count(std::string(name)) != 0; }

const std::string& PromptSet::get(std::string_view name) const {
  auto it = templates_.find(std::string(name));
  if (it == templates_.end()) throw UsageError("prompt template missing: " + std::string(name));
  return it->second;
}

std::string PromptSet::render(std::string_view name, const std::map<std::string, std::string>& vars) const {
  const std::string& tpl = get(name);
  std::string out;
  out.reserve(tpl.size() * 2);
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find("{{", pos);
    if (open == std::string::npos) break;
    const std::size_t close = tpl.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(tpl, pos, open - pos);
    const std::string key = tpl.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) {
      throw UsageError("prompt template " + std::string(name) + " needs variable '" + key + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  out.append(tpl, pos, std::string::npos);
  return out;
}

std::string PromptSet::version_for(std::string_view family) const {
  const std::string prefix = std::string(family) + ".";
  std::string material;
  for (const auto& [name, text] : templates_) {
    if (name.rfind(prefix, 0) != 0 && name.rfind("common.", 0) != 0) continue;
    material += name;
    material += '\0';
    material += text;
    material += '\0';
  }
  return label_ + ":" + sha256_hex(material).substr(0, 12);
}

}  // namespace peel
