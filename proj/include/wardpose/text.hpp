// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small text helpers shared by the CSV and key=value readers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wardpose::text {

// Shortest representation that round-trips through parse_double.
std::string format_double(double v);
// Fixed-point with `decimals` digits.
std::string format_fixed(double v, int decimals);

std::optional<double> parse_double(std::string_view s) noexcept;
std::optional<std::int64_t> parse_int(std::string_view s) noexcept;

std::string_view trim(std::string_view s) noexcept;

// RFC 4180-style split (double-quoted fields, "" escapes).
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_field(std::string_view field);

}  // namespace wardpose::text
