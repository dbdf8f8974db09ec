// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/dataset_prep.hpp"
#include "wardpose/synthetic.hpp"

namespace wardpose::testing {

// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Writes `frames` generated PPM frames plus manifest.txt into dir and
// returns the manifest as read back from disk.
dataset::ClipManifest write_test_clip(const std::filesystem::path& dir, const std::string& clip_id, std::size_t frames,
                                      int fps, Resolution res, const std::string& label, std::int64_t seed = 0);

// In-memory manifest with frame paths "<id>/<k>" (no files).
dataset::ClipManifest paper_clip(const std::string& clip_id, std::size_t frames, int fps,
                                 Resolution res = {640, 360});

// One subject over frames [0, last]: A042 for windows ending in [fps-1,
// fall_start-1], then A043 0.97 for windows ending in [fall_start, last].
nlohmann::json fall_script(std::int64_t last_frame, std::int64_t fall_start, int recognize_delay_ms = 0);
// One subject sized for the 64x36 conformance frames, A043 everywhere.
nlohmann::json conformance_script();
// Detects nothing and recognizes nothing.
nlohmann::json empty_scene_script();

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

// Byte-level digest of every regular file under dir, keyed by relative path.
std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& dir);

// Path of the wardpose executable (set by CMake).
std::string cli_path();

}  // namespace wardpose::testing
