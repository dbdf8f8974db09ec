// SPDX-License-Identifier: Apache-2.0
#pragma once

// Line-oriented configuration:
//
//   # comment
//   [run]
//   mode = online
//   fps = 25
//
// Every key belongs to exactly one section and maps one-to-one onto the
// command-line flag --<key> (underscores become dashes). Unknown keys and
// ill-typed values are rejected with BadConfig naming file and line.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wardpose/pipeline.hpp"

namespace wardpose::config {

enum class ValueType { Int, Double, Bool, String, Choice, IntList };

struct KeySpec {
  std::string_view section;
  std::string_view key;
  ValueType type;
  std::string_view default_value;
  std::string_view help;
  std::string_view choices = {};  // '|'-separated for Choice
};

std::span<const KeySpec> schema();
const KeySpec* find_key(std::string_view key) noexcept;
std::string flag_name(const KeySpec& spec);
std::vector<std::string_view> sections();

class Config {
 public:
  // Schema defaults.
  Config();

  void merge_file(const std::filesystem::path& path);
  void merge_text(std::string_view text, const std::string& origin);
  // Validates the value against the key's type.
  void set(std::string_view key, std::string_view value, const std::string& origin = "command line");

  [[nodiscard]] const std::string& raw(std::string_view key) const;
  [[nodiscard]] std::string get_string(std::string_view key) const { return raw(key); }
  [[nodiscard]] std::int64_t get_int(std::string_view key) const;
  [[nodiscard]] double get_double(std::string_view key) const;
  [[nodiscard]] bool get_bool(std::string_view key) const;
  [[nodiscard]] std::vector<std::int64_t> get_int_list(std::string_view key) const;

  // Canonical text, sections in schema order. Restricted to `only` when
  // non-empty.
  [[nodiscard]] std::string to_text(std::span<const std::string_view> only = {}) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Run settings from [run] and [privacy]. Throws BadConfig.
pipeline::RunConfig run_config(const Config& c);

}  // namespace wardpose::config
