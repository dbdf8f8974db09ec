// SPDX-License-Identifier: Apache-2.0
#include "wardpose/dataset_prep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "wardpose/error.hpp"
#include "wardpose/text.hpp"

namespace wardpose::dataset {

namespace fs = std::filesystem;

// --- manifest files ---------------------------------------------------------

std::string format_frame_name(const std::string& pattern, std::size_t index) {
  // Only a single %d / %0Nd conversion is accepted.
  const auto pct = pattern.find('%');
  if (pct == std::string::npos || pattern.find('%', pct + 1) != std::string::npos) {
    throw Error(ErrorCode::IoError, "frame_pattern '" + pattern + "' needs exactly one %d conversion");
  }
  std::size_t i = pct + 1;
  int width = 0;
  bool zero = false;
  if (i < pattern.size() && pattern[i] == '0') {
    zero = true;
    ++i;
  }
  while (i < pattern.size() && std::isdigit(static_cast<unsigned char>(pattern[i])) != 0) {
    width = width * 10 + (pattern[i] - '0');
    ++i;
  }
  if (i >= pattern.size() || pattern[i] != 'd' || width > 12) {
    throw Error(ErrorCode::IoError, "frame_pattern '" + pattern + "' needs exactly one %d conversion");
  }
  std::string num = std::to_string(index);
  if (static_cast<int>(num.size()) < width) num.insert(0, static_cast<std::size_t>(width) - num.size(), zero ? '0' : ' ');
  return pattern.substr(0, pct) + num + pattern.substr(i + 1);
}

ClipManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read manifest " + manifest_path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::IoError, manifest_path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[std::string(text::trim(t.substr(0, eq)))] = std::string(text::trim(t.substr(eq + 1)));
  }

  const auto require = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::IoError, manifest_path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  const auto require_int = [&](const char* key) {
    const auto v = text::parse_int(require(key));
    if (!v || *v <= 0 || *v > 1'000'000) {
      throw Error(ErrorCode::IoError, manifest_path.string() + ": '" + key + "' must be a positive integer");
    }
    return static_cast<int>(*v);
  };

  ClipManifest clip;
  clip.clip_id = require("clip_id");
  clip.fps = require_int("fps");
  clip.resolution = {require_int("width"), require_int("height")};
  clip.label = ActionLabel::from_code(require("label"));
  const std::string pattern = kv.contains("frame_pattern") ? kv["frame_pattern"] : kDefaultFramePattern;
  for (const auto& [key, _] : kv) {
    static const std::array<std::string_view, 6> known = {"clip_id", "fps", "width", "height", "label",
                                                          "frame_pattern"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::IoError, manifest_path.string() + ": unknown key '" + key + "'");
    }
  }

  const fs::path dir = manifest_path.parent_path();
  for (std::size_t i = 0;; ++i) {
    const fs::path frame = dir / format_frame_name(pattern, i);
    if (!fs::exists(frame)) break;
    clip.frames.push_back({frame.string()});
  }
  if (clip.frames.empty()) {
    throw Error(ErrorCode::EmptyClip, manifest_path.string() + ": no frames match '" + pattern + "'");
  }
  return clip;
}

void write_manifest_file(const fs::path& manifest_path, const ClipManifest& clip, const std::string& frame_pattern) {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + manifest_path.string());
  out << "clip_id=" << clip.clip_id << '\n'
      << "fps=" << clip.fps << '\n'
      << "width=" << clip.resolution.width << '\n'
      << "height=" << clip.resolution.height << '\n'
      << "label=" << clip.label.code() << '\n'
      << "frame_pattern=" << frame_pattern << '\n';
}

Image load_frame(const ClipManifest& clip, std::size_t index) {
  if (index >= clip.frames.size()) throw Error(ErrorCode::EmptyClip, "frame index out of range");
  Image img = read_ppm(clip.frames[index].path);
  if (img.resolution() != clip.resolution) img = resize(img, clip.resolution);
  return img;
}

ClipManifest write_clip(const ClipManifest& clip, const fs::path& dir, const std::string& frame_pattern) {
  fs::create_directories(dir);
  ClipManifest out = clip;
  out.frames.clear();
  // Repeated references (padding) are decoded once.
  std::map<std::string, Image> cache;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    auto it = cache.find(clip.frames[i].path);
    if (it == cache.end()) {
      if (cache.size() > 8) cache.clear();
      it = cache.emplace(clip.frames[i].path, load_frame(clip, i)).first;
    }
    const fs::path p = dir / format_frame_name(frame_pattern, i);
    write_ppm(p, it->second);
    out.frames.push_back({p.string()});
  }
  write_manifest_file(dir / "manifest.txt", out, frame_pattern);
  return out;
}

// --- preprocessing ------------------------------------------------------------

ClipManifest extend_clip(const ClipManifest& clip) {
  if (clip.frames.empty()) throw Error(ErrorCode::EmptyClip, "clip '" + clip.clip_id + "' has no frames");
  if (clip.fps <= 0) throw Error(ErrorCode::InvalidTarget, "clip '" + clip.clip_id + "' has fps <= 0");
  const std::size_t n = clip.frames.size();
  const std::size_t fps = static_cast<std::size_t>(clip.fps);
  const std::size_t full = kClipSeconds * fps;
  if (n >= full) return clip;

  ClipManifest out = clip;
  out.frames.clear();
  out.frames.reserve(full);
  if (n < 2 * fps) {
    out.frames.insert(out.frames.end(), 2 * fps - n, clip.frames.front());
  }
  out.frames.insert(out.frames.end(), clip.frames.begin(), clip.frames.end());
  out.frames.insert(out.frames.end(), full - out.frames.size(), clip.frames.back());
  return out;
}

ClipManifest resample_clip(const ClipManifest& clip, Resolution to_res, int to_fps) {
  if (to_res.width <= 0 || to_res.height <= 0 || to_fps <= 0) {
    throw Error(ErrorCode::InvalidTarget, "resample target must have positive size and fps");
  }
  if (clip.frames.empty()) throw Error(ErrorCode::EmptyClip, "clip '" + clip.clip_id + "' has no frames");
  if (clip.fps <= 0) throw Error(ErrorCode::InvalidTarget, "clip '" + clip.clip_id + "' has fps <= 0");

  const std::uint64_t n = clip.frames.size();
  const std::uint64_t src = static_cast<std::uint64_t>(clip.fps);
  const std::uint64_t dst = static_cast<std::uint64_t>(to_fps);
  // round-half-up in exact integer arithmetic
  const std::uint64_t count = std::max<std::uint64_t>(1, (2 * n * dst + src) / (2 * src));

  ClipManifest out = clip;
  out.fps = to_fps;
  out.resolution = to_res;
  out.frames.clear();
  out.frames.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t s = std::min(n - 1, (2 * k * src + dst) / (2 * dst));
    out.frames.push_back(clip.frames[s]);
  }
  return out;
}

ClipManifest trim_centered(const ClipManifest& clip, std::size_t length) {
  if (clip.frames.size() <= length) return clip;
  ClipManifest out = clip;
  const std::size_t start = (clip.frames.size() - length) / 2;
  out.frames.assign(clip.frames.begin() + static_cast<std::ptrdiff_t>(start),
                    clip.frames.begin() + static_cast<std::ptrdiff_t>(start + length));
  return out;
}

std::array<ClipManifest, 3> segment_clip(const ClipManifest& clip) {
  const std::size_t fps = clip.fps > 0 ? static_cast<std::size_t>(clip.fps) : 0;
  if (fps == 0 || clip.frames.size() != kClipSeconds * fps) {
    throw Error(ErrorCode::WrongLength, "clip '" + clip.clip_id + "' has " + std::to_string(clip.frames.size()) +
                                            " frames, expected 3 x " + std::to_string(clip.fps));
  }
  std::array<ClipManifest, 3> out;
  for (std::size_t k = 0; k < 3; ++k) {
    out[k] = clip;
    out[k].clip_id = clip.clip_id + "_" + std::to_string(k);
    out[k].frames.assign(clip.frames.begin() + static_cast<std::ptrdiff_t>(k * fps),
                         clip.frames.begin() + static_cast<std::ptrdiff_t>((k + 1) * fps));
  }
  return out;
}

std::size_t keyframe_index(const ClipManifest& clip) {
  if (clip.frames.empty()) throw Error(ErrorCode::EmptyClip, "clip '" + clip.clip_id + "' has no frames");
  return clip.frames.size() / 2;
}

FrameRef keyframe(const ClipManifest& clip) { return clip.frames[keyframe_index(clip)]; }

PreparedClip preprocess_clip(const ClipManifest& clip, Resolution to_res, int to_fps) {
  ClipManifest processed = resample_clip(extend_clip(clip), to_res, to_fps);
  processed = trim_centered(processed, kClipSeconds * static_cast<std::size_t>(to_fps));
  auto segments = segment_clip(processed);
  return {std::move(processed), std::move(segments)};
}

// --- annotations ---------------------------------------------------------------

AnnotationResult build_annotations(std::span<const ClipManifest> clips, InferenceBackend& detector,
                                   const AnnotateOptions& opts) {
  AnnotationResult result;
  for (const ClipManifest& clip : clips) {
    const std::size_t kf = keyframe_index(clip);
    DetectRequest req{clip.frames[kf].path, std::nullopt, static_cast<std::int64_t>(kf), clip.resolution, nullptr};

    std::vector<KeypointSet> subjects;
    try {
      subjects = detector.detect(req);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::ChannelClosed) {
        throw Error(ErrorCode::BackendUnavailable, "detector lost while annotating '" + clip.clip_id + "': " + e.what());
      }
      result.skipped.push_back({clip.clip_id, e.what()});
      continue;
    }

    const KeypointSet* best = nullptr;
    double best_score = -1.0;
    for (const KeypointSet& s : subjects) {
      const double score = s.score(opts.min_confidence);
      if (score > 0.0 && score > best_score) {
        best = &s;
        best_score = score;
      }
    }
    if (best == nullptr) {
      result.skipped.push_back({clip.clip_id, "no subject detected on keyframe " + std::to_string(kf)});
      continue;
    }
    const SubjectBox box = bbox_from_keypoints(*best, clip.resolution.width, clip.resolution.height,
                                               opts.min_confidence, opts.margin);
    result.records.push_back({clip.clip_id, xylw_to_corners(box), clip.label,
                              static_cast<int>(kf / static_cast<std::size_t>(clip.fps))});
  }
  return result;
}

void write_annotation_csv(std::ostream& out, std::span<const AnnotationRecord> records) {
  out << "video_name,x1,y1,x2,y2,label,segment_index\n";
  for (const auto& r : records) {
    out << text::csv_field(r.video_name) << ',' << text::format_double(r.box.x1) << ','
        << text::format_double(r.box.y1) << ',' << text::format_double(r.box.x2) << ','
        << text::format_double(r.box.y2) << ',' << r.label.code() << ',' << r.segment_index << '\n';
  }
}

std::vector<AnnotationRecord> read_annotation_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "video_name,x1,y1,x2,y2,label,segment_index") {
    throw Error(ErrorCode::MalformedRecord, "row 1: expected header video_name,x1,y1,x2,y2,label,segment_index");
  }
  std::vector<AnnotationRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord, "row " + std::to_string(row) + ": " + why);
    };
    if (f.size() != 7) throw bad("expected 7 fields, got " + std::to_string(f.size()));
    AnnotationRecord r;
    r.video_name = f[0];
    double* coords[4] = {&r.box.x1, &r.box.y1, &r.box.x2, &r.box.y2};
    for (int i = 0; i < 4; ++i) {
      const auto v = text::parse_double(f[static_cast<std::size_t>(i) + 1]);
      if (!v || !std::isfinite(*v)) throw bad("bad coordinate '" + f[static_cast<std::size_t>(i) + 1] + "'");
      *coords[i] = *v;
    }
    if (r.box.x2 < r.box.x1 || r.box.y2 < r.box.y1) throw bad("box corners out of order");
    const auto label = ActionLabel::try_from_code(text::trim(f[5]));
    if (!label) throw bad("unknown label '" + f[5] + "'");
    r.label = *label;
    const auto seg = text::parse_int(f[6]);
    if (!seg || *seg < 0 || *seg > 2) throw bad("segment_index must be 0, 1 or 2");
    r.segment_index = static_cast<int>(*seg);
    out.push_back(std::move(r));
  }
  return out;
}

void write_skip_report(std::ostream& out, std::span<const SkipEntry> skipped) {
  out << "clip_id,reason\n";
  for (const auto& s : skipped) out << text::csv_field(s.clip_id) << ',' << text::csv_field(s.reason) << '\n';
}

// --- COCO export ---------------------------------------------------------------

void seeded_shuffle(std::vector<std::size_t>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound);
    std::uint64_t r = gen();
    while (r >= limit) r = gen();
    std::swap(items[i - 1], items[static_cast<std::size_t>(r % bound)]);
  }
}

namespace {

nlohmann::ordered_json categories_json() {
  auto cats = nlohmann::ordered_json::array();
  for (const ActionLabel& l : ActionLabel::all()) {
    cats.push_back({{"id", l.index() + 1},
                    {"name", std::string(l.name())},
                    {"code", std::string(l.code())},
                    {"supercategory", "action"}});
  }
  return cats;
}

nlohmann::ordered_json coco_document(std::span<const AnnotationRecord> records, const std::vector<std::size_t>& picks,
                                     const char* split_name, Resolution size) {
  nlohmann::ordered_json doc;
  doc["info"] = {{"description", "ward action keyframe annotations"}, {"split", split_name}};
  doc["images"] = nlohmann::ordered_json::array();
  doc["annotations"] = nlohmann::ordered_json::array();
  std::size_t id = 1;
  for (const std::size_t idx : picks) {
    const AnnotationRecord& r = records[idx];
    doc["images"].push_back(
        {{"id", id}, {"file_name", r.video_name}, {"width", size.width}, {"height", size.height}});
    const double w = r.box.width();
    const double h = r.box.height();
    doc["annotations"].push_back({{"id", id},
                                  {"image_id", id},
                                  {"category_id", r.label.index() + 1},
                                  {"bbox", {r.box.x1, r.box.y1, w, h}},
                                  {"area", w * h},
                                  {"iscrowd", 0},
                                  {"segment_index", r.segment_index}});
    ++id;
  }
  doc["categories"] = categories_json();
  return doc;
}

}  // namespace

CocoDocuments export_coco(std::span<const AnnotationRecord> records, const SplitSpec& split, Resolution image_size) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no annotation records to export");
  if (!(split.train_fraction >= 0.0 && split.train_fraction <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "train_fraction must lie in [0, 1]");
  }
  std::array<std::vector<std::size_t>, ActionLabel::kCount> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label.index()].push_back(i);

  std::vector<std::size_t> train, val;
  for (std::size_t c = 0; c < by_label.size(); ++c) {
    auto& idx = by_label[c];
    if (idx.empty()) continue;
    seeded_shuffle(idx, split.seed ^ (0x9E3779B97F4A7C15ULL * (c + 1)));
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * split.train_fraction));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {coco_document(records, train, "train", image_size), coco_document(records, val, "val", image_size)};
}

std::string to_text(const nlohmann::ordered_json& doc) { return doc.dump(2) + "\n"; }

}  // namespace wardpose::dataset
