// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace wardpose {

// The closed universe of ward action classes. Codes follow the NTU RGB+D
// naming; index() is the dense 0..11 position used for matrices and COCO
// category ids (index + 1).
class ActionLabel {
 public:
  static constexpr std::size_t kCount = 12;

  constexpr ActionLabel() = default;

  // Throws Error(UnknownLabel) for anything outside the 12 codes.
  static ActionLabel from_code(std::string_view code);
  static std::optional<ActionLabel> try_from_code(std::string_view code) noexcept;
  static ActionLabel from_index(std::size_t index);
  static const std::array<ActionLabel, kCount>& all() noexcept;

  [[nodiscard]] constexpr std::size_t index() const noexcept { return index_; }
  [[nodiscard]] std::string_view code() const noexcept;
  [[nodiscard]] std::string_view name() const noexcept;

  friend constexpr bool operator==(ActionLabel, ActionLabel) = default;
  friend constexpr auto operator<=>(ActionLabel a, ActionLabel b) noexcept {
    return a.index_ <=> b.index_;
  }

 private:
  explicit constexpr ActionLabel(std::size_t index) : index_(index) {}
  std::size_t index_ = 0;
};

}  // namespace wardpose
