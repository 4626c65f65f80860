#include "peel/text.hpp"

#include <cctype>

namespace peel {

namespace {
bool is_space(char c) noexcept { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_label(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string slugify(std::string_view s) {
  std::string out;
  bool dash = false;
  for (unsigned char c : s) {
    if (std::isalnum(c) && c < 0x80) {
      if (dash && !out.empty()) out.push_back('-');
      dash = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      dash = true;
    }
  }
  return out.empty() ? std::string("x") : out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    current.push_back(c);
    const bool terminal = c == '.' || c == '!' || c == '?';
    const bool at_break = i + 1 == text.size() || is_space(text[i + 1]);
    if (terminal && at_break) {
      auto t = trim(current);
      if (!t.empty()) out.emplace_back(t);
      current.clear();
    }
  }
  if (auto t = trim(current); !t.empty()) out.emplace_back(t);
  return out;
}

bool contains_any(std::string_view haystack_lower, const std::vector<std::string_view>& needles) {
  for (auto n : needles) {
    if (haystack_lower.find(n) != std::string_view::npos) return true;
  }
  return false;
}

}  // namespace peel
