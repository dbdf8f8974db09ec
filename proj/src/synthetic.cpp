// SPDX-License-Identifier: Apache-2.0
#include "wardpose/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "wardpose/error.hpp"
#include "wardpose/text.hpp"

namespace wardpose {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::BadScript, where + ": " + what);
}

std::int64_t int_of(const json& v, const std::string& where) {
  if (!v.is_number_integer()) bad(where, "expected an integer");
  return v.get<std::int64_t>();
}

double num_of(const json& v, const std::string& where) {
  if (!v.is_number()) bad(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(where, "expected a finite number");
  return d;
}

const json& array_of(const json& v, const std::string& where) {
  if (!v.is_array()) bad(where, "expected an array");
  return v;
}

std::int64_t key_index(const std::string& key, const std::string& where) {
  const auto v = text::parse_int(key);
  if (!v) bad(where, "key '" + key + "' is not an integer");
  return *v;
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) bad(where, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) bad(where, "unknown key '" + k + "'");
  }
}

KeypointSet parse_subject(const json& j, const std::string& where) {
  check_keys(j, {"subject_index", "box", "confidence", "points"}, where);
  if (!j.contains("subject_index")) bad(where, "subject_index is required");
  const auto idx = int_of(j.at("subject_index"), where + ".subject_index");
  if (idx < 0 || idx > 1'000'000) bad(where, "subject_index out of range");
  if (j.contains("box") == j.contains("points")) bad(where, "exactly one of box or points is required");
  if (j.contains("box")) {
    const json& b = array_of(j.at("box"), where + ".box");
    if (b.size() != 4) bad(where + ".box", "expected [x1, y1, x2, y2]");
    CornerBox c{num_of(b[0], where + ".box"), num_of(b[1], where + ".box"), num_of(b[2], where + ".box"),
                num_of(b[3], where + ".box")};
    if (c.x1 < 0 || c.y1 < 0 || c.x2 < c.x1 || c.y2 < c.y1) bad(where + ".box", "corners out of order");
    const double conf = j.contains("confidence") ? num_of(j.at("confidence"), where + ".confidence") : 0.9;
    if (conf < 0 || conf > 1) bad(where + ".confidence", "outside [0,1]");
    return synthetic_figure(c, conf, static_cast<int>(idx));
  }
  KeypointSet k;
  k.subject_index = static_cast<int>(idx);
  for (const json& p : array_of(j.at("points"), where + ".points")) {
    if (!p.is_array() || p.size() != 4) bad(where + ".points", "expected [part_id, x, y, confidence]");
    Keypoint kp;
    kp.part_id = static_cast<int>(int_of(p[0], where + ".points"));
    kp.x = num_of(p[1], where + ".points");
    kp.y = num_of(p[2], where + ".points");
    kp.confidence = num_of(p[3], where + ".points");
    if (kp.part_id < 0 || kp.part_id >= parts::kTotal) bad(where + ".points", "unknown part_id");
    if (kp.x < 0 || kp.y < 0) bad(where + ".points", "negative coordinate");
    if (kp.confidence < 0 || kp.confidence > 1) bad(where + ".points", "confidence outside [0,1]");
    k.points.push_back(kp);
  }
  return k;
}

std::vector<KeypointSet> parse_subjects(const json& j, const std::string& where) {
  std::vector<KeypointSet> out;
  std::set<int> seen;
  std::size_t i = 0;
  for (const json& s : array_of(j, where)) {
    out.push_back(parse_subject(s, where + "[" + std::to_string(i++) + "]"));
    if (!seen.insert(out.back().subject_index).second) bad(where, "duplicate subject_index");
  }
  return out;
}

std::vector<ScriptedPrediction> parse_predictions(const json& j, const std::string& where) {
  std::vector<ScriptedPrediction> out;
  std::size_t i = 0;
  for (const json& p : array_of(j, where)) {
    const std::string at = where + "[" + std::to_string(i++) + "]";
    check_keys(p, {"subject_index", "scores"}, at);
    ScriptedPrediction sp;
    if (!p.contains("subject_index")) bad(at, "subject_index is required");
    const json& idx = p.at("subject_index");
    if (idx.is_string() && idx.get<std::string>() == "*") {
      sp.subject_index = -1;
    } else {
      const auto v = int_of(idx, at + ".subject_index");
      if (v < 0) bad(at, "subject_index must be >= 0 or \"*\"");
      sp.subject_index = static_cast<int>(v);
    }
    if (!p.contains("scores") || !p.at("scores").is_object()) bad(at, "scores object is required");
    for (const auto& [code, v] : p.at("scores").items()) {
      const auto label = ActionLabel::try_from_code(code);
      if (!label) bad(at + ".scores", "unknown label '" + code + "'");
      const double s = num_of(v, at + ".scores." + code);
      if (s < 0 || s > 1) bad(at + ".scores." + code, "outside [0,1]");
      sp.scores[*label] = s;
    }
    if (sp.scores.empty()) bad(at, "scores must not be empty");
    out.push_back(std::move(sp));
  }
  return out;
}

std::chrono::milliseconds delay_of(const json& section, const std::string& where) {
  if (!section.contains("delay_ms")) return std::chrono::milliseconds(0);
  const auto v = int_of(section.at("delay_ms"), where + ".delay_ms");
  if (v < 0) bad(where + ".delay_ms", "must be >= 0");
  return std::chrono::milliseconds(v);
}

std::pair<std::int64_t, std::int64_t> range_of(const json& r, const std::string& where) {
  if (!r.contains("from") || !r.contains("to")) bad(where, "from and to are required");
  const auto from = int_of(r.at("from"), where + ".from");
  const auto to = int_of(r.at("to"), where + ".to");
  if (to < from) bad(where, "to precedes from");
  return {from, to};
}

}  // namespace

SyntheticScript parse_script(const json& j) {
  check_keys(j, {"name", "detect", "recognize"}, "script");
  SyntheticScript s;
  if (j.contains("name")) {
    if (!j.at("name").is_string()) bad("script.name", "expected a string");
    s.name = j.at("name").get<std::string>();
  }
  if (j.contains("detect")) {
    const json& d = j.at("detect");
    check_keys(d, {"delay_ms", "paths", "frames", "ranges"}, "detect");
    s.detect_delay = delay_of(d, "detect");
    if (d.contains("paths")) {
      std::size_t i = 0;
      for (const json& p : array_of(d.at("paths"), "detect.paths")) {
        const std::string at = "detect.paths[" + std::to_string(i++) + "]";
        check_keys(p, {"match", "subjects"}, at);
        if (!p.contains("match") || !p.at("match").is_string()) bad(at, "match string is required");
        if (!p.contains("subjects")) bad(at, "subjects is required");
        s.paths.push_back({p.at("match").get<std::string>(), parse_subjects(p.at("subjects"), at + ".subjects")});
      }
    }
    if (d.contains("frames")) {
      if (!d.at("frames").is_object()) bad("detect.frames", "expected an object");
      for (const auto& [k, v] : d.at("frames").items()) {
        s.frames[key_index(k, "detect.frames")] = parse_subjects(v, "detect.frames." + k);
      }
    }
    if (d.contains("ranges")) {
      std::size_t i = 0;
      for (const json& r : array_of(d.at("ranges"), "detect.ranges")) {
        const std::string at = "detect.ranges[" + std::to_string(i++) + "]";
        check_keys(r, {"from", "to", "subjects"}, at);
        const auto [from, to] = range_of(r, at);
        if (!r.contains("subjects")) bad(at, "subjects is required");
        s.frame_ranges.push_back({from, to, parse_subjects(r.at("subjects"), at + ".subjects")});
      }
    }
  }
  if (j.contains("recognize")) {
    const json& rj = j.at("recognize");
    check_keys(rj, {"delay_ms", "windows", "ranges"}, "recognize");
    s.recognize_delay = delay_of(rj, "recognize");
    if (rj.contains("windows")) {
      if (!rj.at("windows").is_object()) bad("recognize.windows", "expected an object");
      for (const auto& [k, v] : rj.at("windows").items()) {
        s.windows[key_index(k, "recognize.windows")] = parse_predictions(v, "recognize.windows." + k);
      }
    }
    if (rj.contains("ranges")) {
      std::size_t i = 0;
      for (const json& r : array_of(rj.at("ranges"), "recognize.ranges")) {
        const std::string at = "recognize.ranges[" + std::to_string(i++) + "]";
        check_keys(r, {"from", "to", "predictions"}, at);
        const auto [from, to] = range_of(r, at);
        if (!r.contains("predictions")) bad(at, "predictions is required");
        s.window_ranges.push_back({from, to, parse_predictions(r.at("predictions"), at + ".predictions")});
      }
    }
  }
  return s;
}

SyntheticScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadScript, "cannot open script " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadScript, path.string() + ": " + e.what());
  }
  return parse_script(j);
}

KeypointSet synthetic_figure(const CornerBox& box, double confidence, int subject_index) {
  struct P {
    int part;
    double u;
    double v;
  };
  // Normalized positions inside the box (u right, v down). Body ids follow
  // BODY_25 order: nose, neck, right arm, left arm, hips and legs, eyes,
  // ears, feet.
  static constexpr std::array<P, 35> kFigure{{
      {0, 0.50, 0.08},     {1, 0.50, 0.20},      {2, 0.30, 0.22},
      {3, 0.15, 0.38},   {4, 0.00, 0.50},    {5, 0.70, 0.22},
      {6, 0.85, 0.38},   {7, 1.00, 0.50},    {8, 0.50, 0.55},
      {9, 0.40, 0.55},     {10, 0.38, 0.75},     {11, 0.36, 0.95},
      {12, 0.60, 0.55},     {13, 0.62, 0.75},     {14, 0.64, 0.95},
      {15, 0.46, 0.05},     {16, 0.54, 0.05},      {17, 0.42, 0.06},
      {18, 0.58, 0.06},     {19, 0.70, 1.00},   {20, 0.72, 0.99},
      {21, 0.63, 0.98},    {22, 0.30, 1.00},   {23, 0.28, 0.99},
      {24, 0.37, 0.98},    {parts::kFaceBase + 17, 0.44, 0.00}, {parts::kFaceBase + 26, 0.56, 0.00},
      {parts::kFaceBase + 8, 0.50, 0.13}, {parts::kFaceBase + 30, 0.50, 0.09}, {parts::kFaceBase + 36, 0.45, 0.05},
      {parts::kFaceBase + 45, 0.55, 0.05}, {parts::kFaceBase + 48, 0.46, 0.11}, {parts::kFaceBase + 54, 0.54, 0.11},
      {parts::kFaceBase + 0, 0.43, 0.06},  {parts::kFaceBase + 16, 0.57, 0.06},
  }};
  KeypointSet k;
  k.subject_index = subject_index;
  k.points.reserve(kFigure.size());
  for (const P& p : kFigure) {
    k.points.push_back({box.x1 * (1.0 - p.u) + box.x2 * p.u, box.y1 * (1.0 - p.v) + box.y2 * p.v, confidence, p.part});
  }
  return k;
}

SyntheticBackend::SyntheticBackend(SyntheticScript script) : script_(std::move(script)) {}

Capabilities SyntheticBackend::capabilities() {
  return {kProtocolVersion, {"detect", "recognize"}, "synthetic" + (script_.name.empty() ? "" : ":" + script_.name)};
}

std::vector<KeypointSet> SyntheticBackend::detect(const DetectRequest& req) {
  if (script_.detect_delay.count() > 0) std::this_thread::sleep_for(script_.detect_delay);
  if (!req.frame_path.empty()) {
    for (const auto& rule : script_.paths) {
      if (req.frame_path.find(rule.match) != std::string::npos) return rule.subjects;
    }
  }
  if (auto it = script_.frames.find(req.frame_index); it != script_.frames.end()) return it->second;
  for (const auto& r : script_.frame_ranges) {
    if (req.frame_index >= r.from && req.frame_index <= r.to) return r.subjects;
  }
  return {};
}

std::vector<ActionPrediction> SyntheticBackend::recognize(const RecognizeRequest& req) {
  validate_window(req);
  if (script_.recognize_delay.count() > 0) std::this_thread::sleep_for(script_.recognize_delay);
  const std::vector<ScriptedPrediction>* scripted = nullptr;
  if (auto it = script_.windows.find(req.window_end_index); it != script_.windows.end()) {
    scripted = &it->second;
  } else {
    for (const auto& r : script_.window_ranges) {
      if (req.window_end_index >= r.from && req.window_end_index <= r.to) {
        scripted = &r.predictions;
        break;
      }
    }
  }
  if (scripted == nullptr) return {};

  std::set<int> present;
  for (const SubjectBox& b : req.frames.back().boxes) present.insert(b.subject_index);
  std::map<int, ActionPrediction> out;
  for (const ScriptedPrediction& sp : *scripted) {
    auto emit = [&](int subject) {
      if (out.contains(subject)) return;
      out[subject] = {subject, sp.scores, req.window_end_index};
    };
    if (sp.subject_index < 0) {
      for (int s : present) emit(s);
    } else if (present.contains(sp.subject_index)) {
      emit(sp.subject_index);
    }
  }
  std::vector<ActionPrediction> result;
  for (auto& [s, p] : out) result.push_back(std::move(p));
  return result;
}

}  // namespace wardpose
