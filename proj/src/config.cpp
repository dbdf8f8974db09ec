// SPDX-License-Identifier: Apache-2.0
#include "wardpose/config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wardpose/error.hpp"
#include "wardpose/text.hpp"

namespace wardpose::config {

namespace {

using enum ValueType;

constexpr std::array kSchema{
    // [run]
    KeySpec{"run", "mode", Choice, "offline", "offline or online", "offline|online"},
    KeySpec{"run", "fps", Int, "25", "frames per second of online sources"},
    KeySpec{"run", "width", Int, "640", "frame width of online sources"},
    KeySpec{"run", "height", Int, "360", "frame height of online sources"},
    KeySpec{"run", "score_display_threshold", Double, "0.5", "minimum score for a rendered label"},
    KeySpec{"run", "min_box_area", Double, "4", "boxes below this area (px^2) are discarded"},
    KeySpec{"run", "top_k", Int, "3", "labels rendered per subject"},
    KeySpec{"run", "overlay_horizon", Int, "0", "frames a prediction stays on screen (0: 2*fps)"},
    KeySpec{"run", "watermark", Bool, "false", "stamp WARDPOSE in the corner of every frame"},
    KeySpec{"run", "min_confidence", Double, "0.05", "keypoint confidence threshold for boxes"},
    KeySpec{"run", "margin", Double, "0", "box growth as a fraction of its size per side"},
    KeySpec{"run", "offline_stride", Int, "1", "frames between offline recognitions"},
    KeySpec{"run", "online_stride", Int, "0", "frames between online recognitions (0: fps)"},
    KeySpec{"run", "detect_queue", Int, "8", "capacity of the detection queue"},
    KeySpec{"run", "render_queue", Int, "32", "capacity of the render queue"},
    KeySpec{"run", "recognize_queue", Int, "2", "capacity of the recognition queue"},
    KeySpec{"run", "result_queue", Int, "8", "capacity of the result queue"},
    KeySpec{"run", "backpressure", Choice, "drop_oldest", "policy for full queues", "drop_oldest|block|strict"},
    KeySpec{"run", "stall_timeout_ms", Int, "5000", "source silence tolerated before failing"},
    // [privacy]
    KeySpec{"privacy", "blur_faces", Bool, "false", "pixelate faces found by keypoints"},
    KeySpec{"privacy", "blur_block", Int, "0", "pixelation cell size (0: max(8, width/8))"},
    KeySpec{"privacy", "face_margin", Double, "0.25", "face box growth per side"},
    // [backend]
    KeySpec{"backend", "detector", String, "", "synthetic:<script.json> or exec:<command>"},
    KeySpec{"backend", "recognizer", String, "", "synthetic:<script.json> or exec:<command> (default: detector)"},
    KeySpec{"backend", "timeout_ms", Int, "5000", "per-request timeout"},
    KeySpec{"backend", "handshake_timeout_ms", Int, "5000", "handshake timeout"},
    // [input]
    KeySpec{"input", "source", Choice, "clip", "online frame source", "clip|synthetic|stdin"},
    KeySpec{"input", "clip", String, "", "clip manifest (manifest.txt) or its directory"},
    KeySpec{"input", "synthetic_frames", Int, "250", "frames produced by the synthetic source"},
    KeySpec{"input", "synthetic_pace", Double, "0", "synthetic source speed (1: real time, 0: unpaced)"},
    // [output]
    KeySpec{"output", "output_dir", String, "out", "directory for frames, log and report"},
    KeySpec{"output", "write_frames", Bool, "true", "write annotated frames as PPM files"},
    // [dataset]
    KeySpec{"dataset", "input_dir", String, "", "directory of clip directories with manifest.txt"},
    KeySpec{"dataset", "prepared_dir", String, "prepared", "output directory of prepare"},
    KeySpec{"dataset", "train_fraction", Double, "0.8", "per-class share of the training split"},
    KeySpec{"dataset", "seed", Int, "0", "split seed"},
    // [eval]
    KeySpec{"eval", "gt", String, "", "ground truth (CSV or COCO-style .json)"},
    KeySpec{"eval", "pred", String, "", "predictions CSV"},
    KeySpec{"eval", "iou_threshold", Double, "0.5", "IoU needed for a match"},
    KeySpec{"eval", "eval_dir", String, "eval", "directory for report.json, per_class.csv, confusion.csv"},
    // [curves]
    KeySpec{"curves", "records", String, "", "series,iteration,value CSV"},
    KeySpec{"curves", "curves_dir", String, "curves", "directory for the curve CSVs"},
    // [blur]
    KeySpec{"blur", "blur_input", String, "", "clip manifest (or directory) to blur"},
    KeySpec{"blur", "blur_output", String, "blurred", "directory for the blurred clip"},
    // [train] pass-through for external trainers, type-checked only
    KeySpec{"train", "num_classes", Int, "12", "NUM_CLASSES"},
    KeySpec{"train", "base_lr", Double, "0.000125", "BASE_LR"},
    KeySpec{"train", "steps", IntList, "560000,720000", "STEPS"},
    KeySpec{"train", "max_iter", Int, "100000", "MAX_ITER"},
    KeySpec{"train", "videos_per_batch", Int, "2", "VIDEOS_PER_BATCH"},
};

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::BadConfig, where + ": " + what);
}

std::string normalize(const KeySpec& spec, std::string_view value, const std::string& where) {
  const std::string v(text::trim(value));
  const std::string name(spec.key);
  switch (spec.type) {
    case Int:
      if (!text::parse_int(v)) bad(where, name + " expects an integer, got '" + v + "'");
      return std::to_string(*text::parse_int(v));
    case Double: {
      const auto d = text::parse_double(v);
      if (!d || !std::isfinite(*d)) bad(where, name + " expects a number, got '" + v + "'");
      return v;
    }
    case Bool: {
      std::string lower = v;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") return "true";
      if (lower == "false" || lower == "0" || lower == "no" || lower == "off") return "false";
      bad(where, name + " expects true or false, got '" + v + "'");
    }
    case String:
      return v;
    case Choice: {
      std::string_view rest = spec.choices;
      while (!rest.empty()) {
        const auto bar = rest.find('|');
        if (rest.substr(0, bar) == v) return v;
        rest = bar == std::string_view::npos ? std::string_view{} : rest.substr(bar + 1);
      }
      bad(where, name + " must be one of " + std::string(spec.choices) + ", got '" + v + "'");
    }
    case IntList: {
      std::string out;
      std::string_view rest = v;
      if (!rest.empty() && rest.front() == '(' && rest.back() == ')') rest = rest.substr(1, rest.size() - 2);
      while (true) {
        const auto comma = rest.find(',');
        const auto item = text::parse_int(rest.substr(0, comma));
        if (!item) bad(where, name + " expects comma-separated integers, got '" + v + "'");
        if (!out.empty()) out += ',';
        out += std::to_string(*item);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      return out;
    }
  }
  return v;
}

}  // namespace

std::span<const KeySpec> schema() { return kSchema; }

const KeySpec* find_key(std::string_view key) noexcept {
  for (const KeySpec& k : kSchema) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string flag_name(const KeySpec& spec) {
  std::string f = "--" + std::string(spec.key);
  std::replace(f.begin() + 2, f.end(), '_', '-');
  return f;
}

std::vector<std::string_view> sections() {
  std::vector<std::string_view> out;
  for (const KeySpec& k : kSchema) {
    if (std::find(out.begin(), out.end(), k.section) == out.end()) out.push_back(k.section);
  }
  return out;
}

Config::Config() {
  for (const KeySpec& k : kSchema) values_.emplace(std::string(k.key), std::string(k.default_value));
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void Config::merge_text(std::string_view text, const std::string& origin) {
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    std::string_view s = text::trim(line);
    if (s.empty() || s.front() == '#' || s.front() == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad(where, "malformed section header");
      section = std::string(text::trim(s.substr(1, s.size() - 2)));
      const auto all = sections();
      if (std::find(all.begin(), all.end(), section) == all.end()) bad(where, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) bad(where, "expected key = value");
    const std::string key(text::trim(s.substr(0, eq)));
    if (section.empty()) bad(where, "key '" + key + "' appears before any section");
    const KeySpec* spec = find_key(key);
    if (spec == nullptr || spec->section != section) bad(where, "unknown key '" + key + "' in [" + section + "]");
    values_[key] = normalize(*spec, s.substr(eq + 1), where);
  }
}

void Config::set(std::string_view key, std::string_view value, const std::string& origin) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) bad(origin, "unknown key '" + std::string(key) + "'");
  values_[std::string(key)] = normalize(*spec, value, origin);
}

const std::string& Config::raw(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) bad("config", "unknown key '" + std::string(key) + "'");
  return it->second;
}

std::int64_t Config::get_int(std::string_view key) const { return *text::parse_int(raw(key)); }
double Config::get_double(std::string_view key) const { return *text::parse_double(raw(key)); }
bool Config::get_bool(std::string_view key) const { return raw(key) == "true"; }

std::vector<std::int64_t> Config::get_int_list(std::string_view key) const {
  std::vector<std::int64_t> out;
  std::string_view rest = raw(key);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(*text::parse_int(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string Config::to_text(std::span<const std::string_view> only) const {
  std::string out;
  for (std::string_view section : sections()) {
    if (!only.empty() && std::find(only.begin(), only.end(), section) == only.end()) continue;
    out += "[" + std::string(section) + "]\n";
    for (const KeySpec& k : kSchema) {
      if (k.section == section) out += std::string(k.key) + " = " + raw(k.key) + "\n";
    }
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

pipeline::RunConfig run_config(const Config& c) {
  pipeline::RunConfig r;
  auto non_negative = [&](std::string_view key) {
    const auto v = c.get_int(key);
    if (v < 0 || v > (1 << 30)) bad("config", std::string(key) + " out of range");
    return v;
  };
  r.mode = c.raw("mode") == "online" ? pipeline::Mode::Online : pipeline::Mode::Offline;
  r.fps = static_cast<int>(non_negative("fps"));
  r.resolution = {static_cast<int>(non_negative("width")), static_cast<int>(non_negative("height"))};
  r.score_display_threshold = c.get_double("score_display_threshold");
  r.min_box_area = c.get_double("min_box_area");
  r.top_k = static_cast<int>(non_negative("top_k"));
  r.overlay_horizon = static_cast<int>(non_negative("overlay_horizon"));
  r.watermark = c.get_bool("watermark");
  r.min_confidence = c.get_double("min_confidence");
  r.margin = c.get_double("margin");
  r.offline_stride = static_cast<int>(non_negative("offline_stride"));
  r.online_stride = static_cast<int>(non_negative("online_stride"));
  r.detect_queue = static_cast<std::size_t>(non_negative("detect_queue"));
  r.render_queue = static_cast<std::size_t>(non_negative("render_queue"));
  r.recognize_queue = static_cast<std::size_t>(non_negative("recognize_queue"));
  r.result_queue = static_cast<std::size_t>(non_negative("result_queue"));
  const std::string& bp = c.raw("backpressure");
  r.backpressure = bp == "block"    ? pipeline::Backpressure::Block
                   : bp == "strict" ? pipeline::Backpressure::Strict
                                    : pipeline::Backpressure::DropOldest;
  r.stall_timeout = std::chrono::milliseconds(non_negative("stall_timeout_ms"));
  r.blur_faces = c.get_bool("blur_faces");
  r.blur_block = static_cast<int>(non_negative("blur_block"));
  r.face_margin = c.get_double("face_margin");
  pipeline::validate(r);
  return r;
}

}  // namespace wardpose::config
