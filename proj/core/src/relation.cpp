#include "peel/relation.hpp"

#include <cstdint>
#include <cstdio>

#include "peel/error.hpp"
#include "peel/text.hpp"

namespace peel {

std::string_view to_string(RelationKind kind) noexcept {
  switch (kind) {
    case RelationKind::Combine: return "combine";
    case RelationKind::Imply: return "imply";
    case RelationKind::Evaluate: return "evaluate";
  }
  return "?";
}

std::string_view to_string(CombineMode mode) noexcept {
  switch (mode) {
    case CombineMode::Unspecified: return "unspecified";
    case CombineMode::Conjunctive: return "conjunctive";
    case CombineMode::Disjunctive: return "disjunctive";
  }
  return "?";
}

std::optional<CombineMode> combine_mode_from_string(std::string_view text) noexcept {
  if (text == "unspecified") return CombineMode::Unspecified;
  if (text == "conjunctive") return CombineMode::Conjunctive;
  if (text == "disjunctive") return CombineMode::Disjunctive;
  return std::nullopt;
}

std::optional<std::string> arity_violation(const Relationship& rel) {
  if (rel.id.kind() != LabelKind::Relationship) return "relationship id must be an R-label";
  for (const auto& op : rel.operands) {
    if (op.kind() == LabelKind::Conclusion) return "conclusions cannot be operands";
  }
  switch (rel.kind) {
    case RelationKind::Combine:
      if (rel.operands.size() < 2) return "combination needs at least 2 operands";
      if (rel.target && rel.target->kind() != LabelKind::Premise)
        return "combination target must be a premise";
      break;
    case RelationKind::Imply:
      if (rel.operands.size() != 1) return "implication takes exactly 1 source operand";
      if (!rel.target) return "implication requires a target";
      break;
    case RelationKind::Evaluate:
      if (rel.operands.size() != 2) return "evaluation takes exactly 2 operands";
      if (rel.target) return "evaluation has no target";
      break;
  }
  return std::nullopt;
}

namespace {

constexpr std::string_view kImplyUtf8 = "\xE2\x87\x92";  // ⇒
constexpr std::string_view kEvalUtf8 = "\xE2\x88\xA7";   // ∧
constexpr std::string_view kArrowUtf8 = "\xE2\x86\x92";  // →

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::optional<std::uint32_t> parse_hex(std::string_view digits) {
  std::uint32_t value = 0;
  for (char c : digits) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= static_cast<std::uint32_t>(c - '0');
    else if (c >= 'a' && c <= 'f') value |= static_cast<std::uint32_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') value |= static_cast<std::uint32_t>(c - 'A' + 10);
    else return std::nullopt;
  }
  return value;
}

std::string unescape_gloss(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 >= s.size()) {
      out.push_back(s[i]);
      continue;
    }
    const char tag = s[i + 1];
    const std::size_t width = tag == 'u' ? 4 : tag == 'U' ? 8 : tag == 'x' ? 2 : 0;
    if (tag == '\\') {
      out.push_back('\\');
      ++i;
    } else if (width && i + 2 + width <= s.size()) {
      if (auto cp = parse_hex(s.substr(i + 2, width))) {
        if (tag == 'x') out.push_back(static_cast<char>(*cp));
        else append_utf8(out, *cp);
        i += 1 + width;
      } else {
        out.push_back('\\');
      }
    } else {
      out.push_back('\\');
    }
  }
  return out;
}

// Decodes one UTF-8 sequence at s[i]; returns {code point, length} or
// {0, 0} when the bytes are not well-formed.
std::pair<std::uint32_t, std::size_t> decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = b0 >= 0xF0 && b0 < 0xF8 ? 4 : b0 >= 0xE0 ? 3 : b0 >= 0xC2 ? 2 : 0;
  if (len == 0 || i + len > s.size()) return {0, 0};
  std::uint32_t cp = b0 & (len == 2 ? 0x1F : len == 3 ? 0x0F : 0x07);
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0, 0};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

std::string escape_gloss(std::string_view s) {
  std::string out;
  char buf[16];
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == '\\') {
      out += "\\\\";
      ++i;
    } else if (c >= 0x20 && c < 0x7F) {
      out.push_back(static_cast<char>(c));
      ++i;
    } else if (c < 0x80) {
      std::snprintf(buf, sizeof buf, "\\u%04X", c);
      out += buf;
      ++i;
    } else if (auto [cp, len] = decode_utf8(s, i); len) {
      if (cp <= 0xFFFF) std::snprintf(buf, sizeof buf, "\\u%04X", static_cast<unsigned>(cp));
      else std::snprintf(buf, sizeof buf, "\\U%08X", static_cast<unsigned>(cp));
      out += buf;
      i += len;
    } else {
      std::snprintf(buf, sizeof buf, "\\x%02X", c);
      out += buf;
      ++i;
    }
  }
  return out;
}

class RelationParser {
 public:
  explicit RelationParser(std::string_view input) : in_(input) {}

  Relationship parse() {
    Relationship rel;
    skip_ws();
    rel.id = expect_label({LabelKind::Relationship}, {"R-label"});
    skip_ws();
    if (!eat(":")) fail({"':'"});

    skip_ws();
    rel.operands.push_back(expect_label({LabelKind::Premise, LabelKind::Relationship},
                                        {"P-label", "R-label"}));
    bool saw_plus = false;
    bool saw_eval = false;
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (eat("+")) {
        if (saw_eval) throw MixedOperators(at);
        saw_plus = true;
      } else if (eat(kEvalUtf8) || eat("^")) {
        if (saw_plus) throw MixedOperators(at);
        if (saw_eval) {
          pos_ = at;
          fail({"'->'", "','", "end of input"});
        }
        saw_eval = true;
      } else {
        break;
      }
      skip_ws();
      rel.operands.push_back(expect_label({LabelKind::Premise, LabelKind::Relationship},
                                          {"P-label", "R-label"}));
    }

    skip_ws();
    const std::size_t imply_at = pos_;
    if (eat(kImplyUtf8) || eat("=>")) {
      if (saw_eval) {
        pos_ = imply_at;
        fail({"'->'", "','", "end of input"});
      }
      skip_ws();
      if (saw_plus) {
        rel.target = expect_label({LabelKind::Premise}, {"P-label"});
        rel.kind = RelationKind::Combine;
      } else {
        rel.target = expect_label(
            {LabelKind::Premise, LabelKind::Conclusion, LabelKind::Relationship},
            {"P-label", "C-label", "R-label"});
        rel.kind = RelationKind::Imply;
      }
    } else if (saw_eval) {
      rel.kind = RelationKind::Evaluate;
    } else if (saw_plus) {
      rel.kind = RelationKind::Combine;
    } else {
      fail({"'+'", "'^'", "'=>'"});
    }

    skip_ws();
    if (at_end()) return rel;
    if (eat(kArrowUtf8) || eat("->") || eat(",")) {
      auto gloss = trim(in_.substr(pos_));
      if (!gloss.empty()) rel.gloss = unescape_gloss(gloss);
      return rel;
    }
    fail(rel.target || saw_eval || saw_plus
             ? std::vector<std::string>{"'->'", "','", "end of input"}
             : std::vector<std::string>{"'=>'", "'->'", "','", "end of input"});
  }

 private:
  bool at_end() const noexcept { return pos_ >= in_.size(); }

  void skip_ws() {
    while (!at_end() && (in_[pos_] == ' ' || in_[pos_] == '\t' || in_[pos_] == '\r' ||
                         in_[pos_] == '\n')) {
      ++pos_;
    }
  }

  bool eat(std::string_view token) {
    if (in_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    // Errors at end of input point at the last byte so offsets stay inside.
    const std::size_t offset = in_.empty() ? 0 : std::min(pos_, in_.size() - 1);
    throw ParseError(offset, std::move(expected), std::string(in_));
  }

  RefLabel expect_label(std::initializer_list<LabelKind> allowed,
                        std::vector<std::string> expected) {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    if (end < in_.size()) ++end;
    while (end < in_.size() && in_[end] >= '0' && in_[end] <= '9') ++end;
    auto label = RefLabel::parse(in_.substr(start, end - start));
    bool ok = label.has_value();
    if (ok) {
      ok = false;
      for (auto k : allowed) ok = ok || label->kind() == k;
    }
    if (!ok) fail(std::move(expected));
    pos_ = end;
    return *label;
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

Relationship parse_relation(std::string_view line) { return RelationParser(line).parse(); }

std::string serialize_relation(const Relationship& rel) {
  std::string out = rel.id.str() + ":";
  const char* joiner = rel.kind == RelationKind::Evaluate ? " ^ " : " + ";
  for (std::size_t i = 0; i < rel.operands.size(); ++i) {
    out += i == 0 ? " " : joiner;
    out += rel.operands[i].str();
  }
  if (rel.target) out += " => " + rel.target->str();
  if (rel.gloss && !rel.gloss->empty()) out += " -> " + escape_gloss(*rel.gloss);
  return out;
}

}  // namespace peel
