#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace peel {

// Declaration order is the deterministic node order used everywhere: P < R < C.
enum class LabelKind : std::uint8_t { Premise, Relationship, Conclusion };

char kind_letter(LabelKind kind) noexcept;

/// Reference label such as `P12`, `R4` or `C1`. Index is always >= 1.
class RefLabel {
 public:
  RefLabel() = default;
  RefLabel(LabelKind kind, std::uint32_t index);

  static RefLabel premise(std::uint32_t index) { return {LabelKind::Premise, index}; }
  static RefLabel relationship(std::uint32_t index) { return {LabelKind::Relationship, index}; }
  static RefLabel conclusion(std::uint32_t index) { return {LabelKind::Conclusion, index}; }

  /// Parses the whole of `text` ("P3", "R10"); nullopt on anything else.
  static std::optional<RefLabel> parse(std::string_view text);

  LabelKind kind() const noexcept { return kind_; }
  std::uint32_t index() const noexcept { return index_; }
  std::string str() const;

  friend auto operator<=>(const RefLabel&, const RefLabel&) = default;

 private:
  LabelKind kind_ = LabelKind::Premise;
  std::uint32_t index_ = 1;
};

}  // namespace peel
