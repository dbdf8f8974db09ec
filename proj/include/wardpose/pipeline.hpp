// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline and online recognition runs.
//
// Offline: detect every frame, then slide a 1-second window (fps frames)
// over the clip, recognizing each window that ends on the stride.
// Online: capture -> detect -> render, with full windows handed to a
// recognition thread; render overlays whatever predictions have arrived.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/backend.hpp"
#include "wardpose/dataset_prep.hpp"
#include "wardpose/geometry.hpp"
#include "wardpose/image.hpp"

namespace wardpose::pipeline {

enum class Mode { Offline, Online };

// What happens when the detection queue is full: DropOldest sends the
// oldest queued frame straight to render without detections, Block waits,
// Strict fails the run with BackpressureOverflow. The same policy governs
// the recognition queue (DropOldest discards the oldest pending window).
enum class Backpressure { DropOldest, Block, Strict };

struct RunConfig {
  Mode mode = Mode::Offline;
  int fps = dataset::kTargetFps;
  Resolution resolution = dataset::kTargetResolution;

  double score_display_threshold = 0.5;
  double min_box_area = 4.0;
  int top_k = 3;
  int overlay_horizon = 0;  // frames; 0 means 2 * fps
  bool watermark = false;

  bool blur_faces = false;
  int blur_block = 0;  // 0 means max(8, region width / 8)
  double face_margin = 0.25;

  double min_confidence = kDefaultMinConfidence;
  double margin = kDefaultMargin;

  int offline_stride = 1;
  int online_stride = 0;  // 0 means fps

  std::size_t detect_queue = 8;
  std::size_t render_queue = 32;
  std::size_t recognize_queue = 2;
  std::size_t result_queue = 8;
  Backpressure backpressure = Backpressure::DropOldest;
  std::chrono::milliseconds stall_timeout{5000};

  // Set asynchronously (e.g. from a signal handler) to end a run early.
  const std::atomic<bool>* stop = nullptr;

  [[nodiscard]] int effective_online_stride() const noexcept { return online_stride > 0 ? online_stride : fps; }
  [[nodiscard]] int effective_horizon() const noexcept { return overlay_horizon > 0 ? overlay_horizon : 2 * fps; }
};

// Throws BadConfig on out-of-range fields.
void validate(const RunConfig& cfg);

struct Detection {
  SubjectBox box;
  KeypointSet keypoints;
  friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameEnvelope {
  std::int64_t frame_index = 0;
  double timestamp = 0.0;
  std::shared_ptr<const Image> image;
  std::string path;
  // Empty until detection ran; stays empty for frames that skipped it.
  std::optional<std::vector<Detection>> detections;
};

// Converts raw keypoint sets to boxes, dropping subjects without qualifying
// keypoints or with box area below cfg.min_box_area.
std::vector<Detection> to_detections(const std::vector<KeypointSet>& subjects, Resolution res, const RunConfig& cfg);

// Ring of the most recent frames. full() holds iff it contains exactly
// `capacity` frames with consecutive indices.
class WindowBuffer {
 public:
  explicit WindowBuffer(std::size_t capacity) : capacity_(capacity) {}

  // Evicts the oldest frame when at capacity; a gap in indices restarts the
  // buffer from `frame`.
  void push(FrameEnvelope frame);
  [[nodiscard]] bool full() const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return frames_.size(); }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] const std::deque<FrameEnvelope>& frames() const noexcept { return frames_; }
  // Recognition request over the current contents. Requires full().
  [[nodiscard]] RecognizeRequest window_request(int fps) const;

 private:
  std::size_t capacity_;
  std::deque<FrameEnvelope> frames_;
};

// True when a window ending at `end_index` is recognized under `stride`.
bool fires_at(std::int64_t end_index, int fps, int stride) noexcept;

// Latest prediction per tracked subject, attached to boxes in later frames
// by nearest centroid. Entries older than the horizon are dropped.
class OverlayState {
 public:
  struct Entry {
    ActionPrediction prediction;
    SubjectBox box;
  };

  explicit OverlayState(int horizon_frames) : horizon_(horizon_frames) {}

  void apply(const std::vector<ActionPrediction>& preds, const RecognizeRequest& window);
  void expire(std::int64_t frame_index);
  // Entry index matched to each detection (or -1), one-to-one, nearest
  // centroid first. Matched entries follow the detection's box.
  std::vector<int> associate(std::span<const Detection> detections);
  [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
  [[nodiscard]] std::optional<std::int64_t> newest_window() const noexcept { return newest_; }

 private:
  int horizon_;
  std::vector<Entry> entries_;
  std::optional<std::int64_t> newest_;
};

// Draws each box (2 px outline inside the box) and up to top_k label
// banners with score >= score_display_threshold; boxes under min_box_area
// are skipped. With no detections and watermark off the frame is returned
// unchanged.
Image render_overlay(const Image& frame, std::span<const Detection> detections, OverlayState& overlay,
                     const RunConfig& cfg);

// Pixelates the faces of all detections when cfg.blur_faces is set.
Image apply_privacy(const Image& frame, std::span<const Detection> detections, const RunConfig& cfg);

// --- outputs ---------------------------------------------------------------

struct LogRow {
  std::int64_t frame_index = 0;
  int subject_index = 0;
  ActionLabel label;
  double score = 0.0;
  CornerBox box;
  friend bool operator==(const LogRow&, const LogRow&) = default;
  friend auto operator<=>(const LogRow& a, const LogRow& b) {
    if (auto c = a.frame_index <=> b.frame_index; c != 0) return c;
    if (auto c = a.subject_index <=> b.subject_index; c != 0) return c;
    return a.label <=> b.label;
  }
};

// One row per scored label, keyed by the window's final frame and the
// subject's box in that frame.
std::vector<LogRow> log_rows(const RecognizeRequest& window, const std::vector<ActionPrediction>& preds);
// Header: frame_index,subject_index,label,score,x1,y1,x2,y2
void write_log_csv(std::ostream& out, std::span<const LogRow> rows);
std::vector<LogRow> read_log_csv(std::istream& in);

struct LatencyStats {
  std::size_t count = 0;
  double mean_ms = 0.0;
  double max_ms = 0.0;
  void add(double ms) noexcept;
};

struct RunReport {
  std::string mode;
  int fps = 0;
  std::int64_t frames_in = 0;
  std::int64_t frames_out = 0;
  std::int64_t frames_detected = 0;
  std::int64_t detection_drops = 0;
  std::int64_t windows_recognized = 0;
  std::int64_t windows_dropped = 0;
  std::int64_t windows_failed = 0;
  std::int64_t partial_window_frames = 0;
  std::int64_t index_regressions = 0;
  std::int64_t stale_overlay_intervals = 0;
  std::int64_t stale_frames = 0;
  bool stopped_early = false;
  std::map<std::string, std::size_t> queue_capacity;
  std::map<std::string, std::size_t> queue_max_occupancy;
  LatencyStats detect_latency;
  LatencyStats recognize_latency;
  double wall_seconds = 0.0;
};

nlohmann::ordered_json report_json(const RunReport& r);

struct RunResult {
  std::vector<LogRow> log;
  RunReport report;
};

// --- sources and sinks -------------------------------------------------------

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  [[nodiscard]] virtual int fps() const = 0;
  [[nodiscard]] virtual Resolution resolution() const = 0;
  // nullopt at end of stream. May throw SourceStalled.
  virtual std::optional<FrameEnvelope> next() = 0;
};

// Frames of a clip directory, by file path.
class ClipSource final : public FrameSource {
 public:
  explicit ClipSource(dataset::ClipManifest clip) : clip_(std::move(clip)) {}
  [[nodiscard]] int fps() const override { return clip_.fps; }
  [[nodiscard]] Resolution resolution() const override { return clip_.resolution; }
  std::optional<FrameEnvelope> next() override;

 private:
  dataset::ClipManifest clip_;
  std::size_t pos_ = 0;
};

// Deterministic generated frames (gradient plus a moving bar), optionally
// paced in real time. pace = 1 delivers at fps, 10 ten times faster, 0 as
// fast as possible.
class SyntheticSource final : public FrameSource {
 public:
  SyntheticSource(std::int64_t frame_count, int fps, Resolution res, double pace = 0.0);
  [[nodiscard]] int fps() const override { return fps_; }
  [[nodiscard]] Resolution resolution() const override { return res_; }
  std::optional<FrameEnvelope> next() override;

  static Image make_frame(std::int64_t index, Resolution res);

 private:
  std::int64_t count_;
  int fps_;
  Resolution res_;
  double pace_;
  std::int64_t pos_ = 0;
  std::chrono::steady_clock::time_point start_;
};

// Concatenated binary PPM frames read from a file descriptor (the raw
// stream adapter for camera integrations). Throws SourceStalled when no
// byte arrives within the stall timeout.
class PpmStreamSource final : public FrameSource {
 public:
  PpmStreamSource(int fd, int fps, Resolution res, std::chrono::milliseconds stall_timeout);
  [[nodiscard]] int fps() const override { return fps_; }
  [[nodiscard]] Resolution resolution() const override { return res_; }
  std::optional<FrameEnvelope> next() override;

 private:
  // Returns -1 at end of stream.
  int get_byte();
  int fd_;
  int fps_;
  Resolution res_;
  std::chrono::milliseconds stall_;
  std::vector<std::uint8_t> buf_;
  std::size_t buf_pos_ = 0;
  std::int64_t pos_ = 0;
};

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void write(std::int64_t frame_index, const Image& frame) = 0;
};

// Numbered PPM files.
class DirectorySink final : public FrameSink {
 public:
  explicit DirectorySink(std::filesystem::path dir, std::string pattern = dataset::kDefaultFramePattern);
  void write(std::int64_t frame_index, const Image& frame) override;

 private:
  std::filesystem::path dir_;
  std::string pattern_;
};

// Keeps every frame in memory.
class CollectSink final : public FrameSink {
 public:
  void write(std::int64_t frame_index, const Image& frame) override;
  std::vector<std::int64_t> indices;
  std::vector<Image> frames;
};

// Records indices and a running FNV-1a digest of all frame bytes.
class DigestSink final : public FrameSink {
 public:
  void write(std::int64_t frame_index, const Image& frame) override;
  std::vector<std::int64_t> indices;
  std::uint64_t digest = 1469598103934665603ULL;
};

// Concatenated PPM frames to a file descriptor.
class PpmStreamSink final : public FrameSink {
 public:
  explicit PpmStreamSink(int fd) : fd_(fd) {}
  void write(std::int64_t frame_index, const Image& frame) override;

 private:
  int fd_;
};

// --- runs ------------------------------------------------------------------------

// Throws ClipTooShort unless the clip is longer than one second,
// BackendUnavailable when a backend connection is lost.
RunResult run_offline(const dataset::ClipManifest& clip, InferenceBackend& detector, InferenceBackend& recognizer,
                      const RunConfig& cfg, FrameSink& sink);

// Throws SourceStalled, BackendUnavailable, or BackpressureOverflow (Strict
// policy only).
RunResult run_online(FrameSource& source, InferenceBackend& detector, InferenceBackend& recognizer,
                     const RunConfig& cfg, FrameSink& sink);

}  // namespace wardpose::pipeline
