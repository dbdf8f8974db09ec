// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include "wardpose/image.hpp"
#include "wardpose/pipeline.hpp"

namespace wardpose::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("wardpose_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

dataset::ClipManifest write_test_clip(const fs::path& dir, const std::string& clip_id, std::size_t frames, int fps,
                                      Resolution res, const std::string& label, std::int64_t seed) {
  fs::create_directories(dir);
  dataset::ClipManifest clip;
  clip.clip_id = clip_id;
  clip.fps = fps;
  clip.resolution = res;
  clip.label = ActionLabel::from_code(label);
  for (std::size_t i = 0; i < frames; ++i) {
    const fs::path p = dir / dataset::format_frame_name(dataset::kDefaultFramePattern, i);
    write_ppm(p, pipeline::SyntheticSource::make_frame(static_cast<std::int64_t>(i) + seed, res));
    clip.frames.push_back({p.string()});
  }
  dataset::write_manifest_file(dir / "manifest.txt", clip);
  return dataset::read_manifest(dir / "manifest.txt");
}

dataset::ClipManifest paper_clip(const std::string& clip_id, std::size_t frames, int fps, Resolution res) {
  dataset::ClipManifest clip;
  clip.clip_id = clip_id;
  clip.fps = fps;
  clip.resolution = res;
  clip.label = ActionLabel::from_code("A043");
  for (std::size_t i = 0; i < frames; ++i) clip.frames.push_back({clip_id + "/" + std::to_string(i)});
  return clip;
}

nlohmann::json fall_script(std::int64_t last_frame, std::int64_t fall_start, int recognize_delay_ms) {
  using nlohmann::json;
  json subject = {{"subject_index", 0}, {"box", {100, 40, 160, 170}}, {"confidence", 0.9}};
  return json{
      {"name", "fall"},
      {"detect", {{"ranges", json::array({{{"from", 0}, {"to", last_frame}, {"subjects", {subject}}}})}}},
      {"recognize",
       {{"delay_ms", recognize_delay_ms},
        {"ranges",
         json::array({
             {{"from", 0}, {"to", fall_start - 1},
              {"predictions", {{{"subject_index", "*"}, {"scores", {{"A042", 0.62}}}}}}},
             {{"from", fall_start}, {"to", last_frame},
              {"predictions", {{{"subject_index", "*"}, {"scores", {{"A043", 0.97}, {"A042", 0.31}}}}}}},
         })}}},
  };
}

nlohmann::json conformance_script() {
  using nlohmann::json;
  json subject = {{"subject_index", 0}, {"box", {4, 2, 40, 30}}, {"confidence", 0.8}};
  return json{
      {"name", "conformance"},
      {"detect", {{"ranges", json::array({{{"from", 0}, {"to", 1000000}, {"subjects", {subject}}}})}}},
      {"recognize",
       {{"ranges", json::array({{{"from", 0}, {"to", 1000000},
                                 {"predictions", {{{"subject_index", "*"}, {"scores", {{"A043", 0.9}}}}}}}})}}},
  };
}

nlohmann::json empty_scene_script() { return {{"name", "empty"}}; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).string(), read_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string cli_path() {
#ifdef WARDPOSE_CLI_PATH
  return WARDPOSE_CLI_PATH;
#else
  return "wardpose";
#endif
}

}  // namespace wardpose::testing
