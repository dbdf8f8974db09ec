// SPDX-License-Identifier: Apache-2.0
#pragma once

// Clip preprocessing and annotation export for training sets:
// extension to 3 s, resampling, 1 s segmentation, keyframe annotation,
// COCO-style export with a stratified split.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/backend.hpp"
#include "wardpose/geometry.hpp"
#include "wardpose/image.hpp"
#include "wardpose/labels.hpp"

namespace wardpose::dataset {

inline constexpr Resolution kTargetResolution{640, 360};
inline constexpr int kTargetFps = 25;
inline constexpr int kClipSeconds = 3;
inline constexpr const char* kDefaultFramePattern = "frame_%06d.ppm";

struct FrameRef {
  std::string path;
  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

// A clip is an ordered list of frame files plus its declared format. The
// resolution is the one frames are delivered at: load_frame() resizes any
// stored frame that differs.
struct ClipManifest {
  std::string clip_id;
  std::vector<FrameRef> frames;
  int fps = 0;
  Resolution resolution;
  ActionLabel label;

  [[nodiscard]] std::size_t frame_count() const noexcept { return frames.size(); }
  friend bool operator==(const ClipManifest&, const ClipManifest&) = default;
};

// --- manifest files ---------------------------------------------------------

// key=value lines: clip_id, fps, width, height, label, frame_pattern.
// Frames are numbered from 0 relative to the manifest's directory and
// enumerated until the first missing index. Throws IoError / UnknownLabel /
// EmptyClip.
ClipManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest_file(const std::filesystem::path& manifest_path, const ClipManifest& clip,
                         const std::string& frame_pattern = kDefaultFramePattern);

// Writes every frame (resized to clip.resolution) as numbered PPM files into
// `dir` plus `dir/manifest.txt`. Returns the manifest pointing at the copies.
ClipManifest write_clip(const ClipManifest& clip, const std::filesystem::path& dir,
                        const std::string& frame_pattern = kDefaultFramePattern);

Image load_frame(const ClipManifest& clip, std::size_t index);

std::string format_frame_name(const std::string& pattern, std::size_t index);

// --- preprocessing ------------------------------------------------------------

// Pads short clips to 3 * fps frames: clips of at least 2 s get copies of
// their last frame appended; shorter clips are first shifted with copies of
// their first frame so they end at frame 2 * fps - 1. Throws EmptyClip.
ClipManifest extend_clip(const ClipManifest& clip);

// Nearest-source-index temporal resampling plus a resolution change.
// Output frame k is source frame round(k * fps / to_fps), clamped.
// Throws InvalidTarget.
ClipManifest resample_clip(const ClipManifest& clip, Resolution to_res, int to_fps);

// Keeps the centered run of `length` frames; no-op for shorter clips.
ClipManifest trim_centered(const ClipManifest& clip, std::size_t length);

// Three consecutive 1 s segments with ids "<clip_id>_<k>". Throws WrongLength
// unless the clip has exactly 3 * fps frames.
std::array<ClipManifest, 3> segment_clip(const ClipManifest& clip);

// Index floor(count / 2). Throws EmptyClip.
std::size_t keyframe_index(const ClipManifest& clip);
FrameRef keyframe(const ClipManifest& clip);

struct PreparedClip {
  ClipManifest processed;  // exactly 3 s at the target format
  std::array<ClipManifest, 3> segments;
};

// extend -> resample -> trim -> segment.
PreparedClip preprocess_clip(const ClipManifest& clip, Resolution to_res = kTargetResolution,
                             int to_fps = kTargetFps);

// --- annotations ---------------------------------------------------------------

struct AnnotationRecord {
  std::string video_name;
  CornerBox box;
  ActionLabel label;
  int segment_index = 0;
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct SkipEntry {
  std::string clip_id;
  std::string reason;
};

struct AnnotationResult {
  std::vector<AnnotationRecord> records;
  std::vector<SkipEntry> skipped;
};

struct AnnotateOptions {
  double min_confidence = kDefaultMinConfidence;
  double margin = kDefaultMargin;
};

// Detects on each clip's keyframe and keeps the highest-scoring subject.
// Keyframe files must already be stored at the clip's resolution. Clips
// with no usable detection land in `skipped`; a lost backend throws
// BackendUnavailable.
AnnotationResult build_annotations(std::span<const ClipManifest> clips, InferenceBackend& detector,
                                   const AnnotateOptions& opts = {});

// Header: video_name,x1,y1,x2,y2,label,segment_index
void write_annotation_csv(std::ostream& out, std::span<const AnnotationRecord> records);
std::vector<AnnotationRecord> read_annotation_csv(std::istream& in);
void write_skip_report(std::ostream& out, std::span<const SkipEntry> skipped);

// --- COCO export ---------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct CocoDocuments {
  nlohmann::ordered_json train;
  nlohmann::ordered_json val;
};

// Per-label shuffle (seeded) then the first round(n * train_fraction)
// records of each label go to train. Throws EmptyDataset.
CocoDocuments export_coco(std::span<const AnnotationRecord> records, const SplitSpec& split,
                          Resolution image_size = kTargetResolution);

// Canonical serialization (2-space indent, trailing newline).
std::string to_text(const nlohmann::ordered_json& doc);

// Deterministic Fisher-Yates driven by mt19937_64; independent of the
// standard library's distribution implementations.
void seeded_shuffle(std::vector<std::size_t>& items, std::uint64_t seed);

}  // namespace wardpose::dataset
