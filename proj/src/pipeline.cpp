// SPDX-License-Identifier: Apache-2.0
#include "wardpose/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "wardpose/bounded_queue.hpp"
#include "wardpose/error.hpp"

namespace wardpose::pipeline {

void validate(const RunConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
  if (cfg.fps <= 0) bad("fps must be positive");
  if (cfg.resolution.width <= 0 || cfg.resolution.height <= 0) bad("resolution must be positive");
  if (!(cfg.score_display_threshold >= 0.0 && cfg.score_display_threshold <= 1.0)) {
    bad("score_display_threshold must lie in [0,1]");
  }
  if (!(cfg.min_box_area >= 0.0)) bad("min_box_area must be >= 0");
  if (cfg.top_k < 0) bad("top_k must be >= 0");
  if (cfg.overlay_horizon < 0) bad("overlay_horizon must be >= 0");
  if (cfg.blur_block == 1 || cfg.blur_block < 0) bad("blur_block must be 0 (automatic) or >= 2");
  if (!(cfg.face_margin >= 0.0)) bad("face_margin must be >= 0");
  if (!(cfg.min_confidence >= 0.0 && cfg.min_confidence <= 1.0)) bad("min_confidence must lie in [0,1]");
  if (!(cfg.margin >= 0.0)) bad("margin must be >= 0");
  if (cfg.offline_stride <= 0) bad("offline_stride must be positive");
  if (cfg.online_stride < 0) bad("online_stride must be >= 0");
  if (cfg.detect_queue == 0 || cfg.render_queue == 0 || cfg.recognize_queue == 0 || cfg.result_queue == 0) {
    bad("queue capacities must be positive");
  }
  if (cfg.stall_timeout.count() <= 0) bad("stall_timeout must be positive");
}

std::vector<Detection> to_detections(const std::vector<KeypointSet>& subjects, Resolution res, const RunConfig& cfg) {
  std::vector<Detection> out;
  for (const KeypointSet& k : subjects) {
    SubjectBox box;
    try {
      box = bbox_from_keypoints(k, res.width, res.height, cfg.min_confidence, cfg.margin);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoValidKeypoints) continue;
      throw;
    }
    if (box.l * box.w < cfg.min_box_area) continue;
    out.push_back({box, k});
  }
  return out;
}

// --- window buffer ------------------------------------------------------------

void WindowBuffer::push(FrameEnvelope frame) {
  if (!frames_.empty() && frame.frame_index != frames_.back().frame_index + 1) frames_.clear();
  frames_.push_back(std::move(frame));
  while (frames_.size() > capacity_) frames_.pop_front();
}

bool WindowBuffer::full() const noexcept {
  // push() keeps indices consecutive, so the size decides.
  return capacity_ > 0 && frames_.size() == capacity_;
}

RecognizeRequest WindowBuffer::window_request(int fps) const {
  if (!full()) throw Error(ErrorCode::BadWindow, "window buffer is not full");
  RecognizeRequest req;
  req.fps = fps;
  req.window_end_index = frames_.back().frame_index;
  req.frames.reserve(frames_.size());
  for (const FrameEnvelope& f : frames_) {
    WindowFrame w;
    w.frame_index = f.frame_index;
    w.frame_path = f.path;
    if (f.path.empty()) w.pixels = f.image;
    if (f.detections) {
      for (const Detection& d : *f.detections) w.boxes.push_back(d.box);
    }
    req.frames.push_back(std::move(w));
  }
  return req;
}

bool fires_at(std::int64_t end_index, int fps, int stride) noexcept {
  if (fps <= 0 || stride <= 0 || end_index < fps - 1) return false;
  return (end_index - (fps - 1)) % stride == 0;
}

// --- overlay state --------------------------------------------------------------

namespace {

double centroid_distance(const SubjectBox& a, const SubjectBox& b) {
  const double dx = (a.x + 0.5 * a.w) - (b.x + 0.5 * b.w);
  const double dy = (a.y + 0.5 * a.l) - (b.y + 0.5 * b.l);
  return std::hypot(dx, dy);
}

double gate(const SubjectBox& b) { return std::max({8.0, b.w, b.l}); }

// Greedy one-to-one pairing, closest pairs first.
std::vector<int> nearest_pairs(std::span<const SubjectBox> targets, std::span<const SubjectBox> candidates) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const double d = centroid_distance(targets[i], candidates[j]);
      if (d <= gate(candidates[j])) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> match(targets.size(), -1);
  std::vector<bool> used(candidates.size(), false);
  for (const auto& [d, i, j] : pairs) {
    if (match[i] >= 0 || used[j]) continue;
    match[i] = static_cast<int>(j);
    used[j] = true;
  }
  return match;
}

const SubjectBox* box_of(const WindowFrame& f, int subject_index) {
  for (const SubjectBox& b : f.boxes) {
    if (b.subject_index == subject_index) return &b;
  }
  return nullptr;
}

}  // namespace

void OverlayState::apply(const std::vector<ActionPrediction>& preds, const RecognizeRequest& window) {
  if (window.frames.empty()) return;
  std::vector<Entry> fresh;
  for (const ActionPrediction& p : preds) {
    if (const SubjectBox* b = box_of(window.frames.back(), p.subject_index)) fresh.push_back({p, *b});
  }
  std::vector<SubjectBox> fresh_boxes, old_boxes;
  for (const Entry& e : fresh) fresh_boxes.push_back(e.box);
  for (const Entry& e : entries_) old_boxes.push_back(e.box);
  const std::vector<int> replaced = nearest_pairs(fresh_boxes, old_boxes);
  std::vector<bool> drop(entries_.size(), false);
  for (int j : replaced) {
    if (j >= 0) drop[static_cast<std::size_t>(j)] = true;
  }
  std::vector<Entry> kept;
  for (std::size_t j = 0; j < entries_.size(); ++j) {
    if (!drop[j]) kept.push_back(std::move(entries_[j]));
  }
  for (Entry& e : fresh) kept.push_back(std::move(e));
  entries_ = std::move(kept);
  if (!newest_ || window.window_end_index > *newest_) newest_ = window.window_end_index;
}

void OverlayState::expire(std::int64_t frame_index) {
  std::erase_if(entries_, [&](const Entry& e) { return frame_index - e.prediction.window_end_index > horizon_; });
}

std::vector<int> OverlayState::associate(std::span<const Detection> detections) {
  std::vector<SubjectBox> boxes, entry_boxes;
  for (const Detection& d : detections) boxes.push_back(d.box);
  for (const Entry& e : entries_) entry_boxes.push_back(e.box);
  std::vector<int> match = nearest_pairs(boxes, entry_boxes);
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] >= 0) entries_[static_cast<std::size_t>(match[i])].box = boxes[i];
  }
  return match;
}

// --- log rows ----------------------------------------------------------------------

std::vector<LogRow> log_rows(const RecognizeRequest& window, const std::vector<ActionPrediction>& preds) {
  std::vector<LogRow> rows;
  for (const ActionPrediction& p : preds) {
    CornerBox box;
    if (!window.frames.empty()) {
      if (const SubjectBox* b = box_of(window.frames.back(), p.subject_index)) box = xylw_to_corners(*b);
    }
    for (const auto& [label, score] : p.scores) rows.push_back({window.window_end_index, p.subject_index, label, score, box});
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

// --- runs ------------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Connection loss and silence both mean the backend is gone.
[[noreturn]] void rethrow_as_unavailable(const Error& e) {
  if (e.code() == ErrorCode::ChannelClosed || e.code() == ErrorCode::Timeout) {
    throw Error(ErrorCode::BackendUnavailable, e.what(), e.detail());
  }
  throw e;
}

}  // namespace

RunResult run_offline(const dataset::ClipManifest& clip, InferenceBackend& detector, InferenceBackend& recognizer,
                      const RunConfig& cfg, FrameSink& sink) {
  validate(cfg);
  const auto wall0 = Clock::now();
  const int fps = clip.fps;
  if (fps <= 0) throw Error(ErrorCode::BadConfig, "clip fps must be positive");
  if (clip.frame_count() <= static_cast<std::size_t>(fps)) {
    throw Error(ErrorCode::ClipTooShort, "clip " + clip.clip_id + " has " + std::to_string(clip.frame_count()) +
                                             " frames; offline mode needs more than " + std::to_string(fps));
  }
  const Resolution res = clip.resolution;
  RunResult result;
  RunReport& rep = result.report;
  rep.mode = "offline";
  rep.fps = fps;

  // Phase 1: detect every frame.
  std::vector<std::vector<Detection>> detections(clip.frame_count());
  for (std::size_t i = 0; i < clip.frame_count(); ++i) {
    DetectRequest req{clip.frames[i].path, std::nullopt, static_cast<std::int64_t>(i), res, nullptr};
    if (req.frame_path.empty()) req.pixels = std::make_shared<const Image>(dataset::load_frame(clip, i));
    const auto t0 = Clock::now();
    std::vector<KeypointSet> subjects;
    try {
      subjects = detector.detect(req);
    } catch (const Error& e) {
      rethrow_as_unavailable(e);
    }
    rep.detect_latency.add(ms_since(t0));
    detections[i] = to_detections(subjects, res, cfg);
    ++rep.frames_in;
    ++rep.frames_detected;
  }

  // Phase 2: slide the window, recognize, render.
  WindowBuffer window(static_cast<std::size_t>(fps));
  OverlayState overlay(cfg.effective_horizon());
  std::int64_t last_fired = -1;
  for (std::size_t i = 0; i < clip.frame_count(); ++i) {
    const auto index = static_cast<std::int64_t>(i);
    auto image = std::make_shared<const Image>(dataset::load_frame(clip, i));
    window.push({index, static_cast<double>(index) / fps, image, clip.frames[i].path, detections[i]});
    if (window.full() && fires_at(index, fps, cfg.offline_stride)) {
      const RecognizeRequest req = window.window_request(fps);
      const auto t0 = Clock::now();
      std::vector<ActionPrediction> preds;
      try {
        preds = recognizer.recognize(req);
      } catch (const Error& e) {
        rethrow_as_unavailable(e);
      }
      rep.recognize_latency.add(ms_since(t0));
      ++rep.windows_recognized;
      last_fired = index;
      auto rows = log_rows(req, preds);
      result.log.insert(result.log.end(), rows.begin(), rows.end());
      overlay.apply(preds, req);
    }
    overlay.expire(index);
    const Image shown = apply_privacy(*image, detections[i], cfg);
    sink.write(index, render_overlay(shown, detections[i], overlay, cfg));
    ++rep.frames_out;
  }
  rep.partial_window_frames = static_cast<std::int64_t>(clip.frame_count()) - 1 - last_fired;
  std::sort(result.log.begin(), result.log.end());
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - wall0).count();
  return result;
}

// --- online ------------------------------------------------------------------------------

namespace {

// Caps the number of frames between capture and the sink, which bounds the
// reorder buffer in the render stage.
class InFlight {
 public:
  explicit InFlight(std::size_t capacity) : capacity_(capacity) {}
  bool acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || count_ < capacity_; });
    if (closed_) return false;
    ++count_;
    high_water_ = std::max(high_water_, count_);
    return true;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      if (count_ > 0) --count_;
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t max_occupancy() const {
    std::lock_guard lock(mu_);
    return high_water_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t count_ = 0;
  std::size_t high_water_ = 0;
  bool closed_ = false;
};

struct Sequenced {
  std::int64_t seq = 0;
  FrameEnvelope env;
};

struct WindowResult {
  RecognizeRequest request;
  std::vector<ActionPrediction> predictions;
  bool failed = false;
};

struct FailureSlot {
  std::mutex mu;
  std::exception_ptr error;
  std::atomic<bool> aborted{false};

  void record(std::exception_ptr e) {
    std::lock_guard lock(mu);
    if (!error) error = std::move(e);
    aborted = true;
  }
};

}  // namespace

RunResult run_online(FrameSource& source, InferenceBackend& detector, InferenceBackend& recognizer,
                     const RunConfig& cfg_in, FrameSink& sink) {
  RunConfig cfg = cfg_in;
  cfg.fps = source.fps();
  cfg.resolution = source.resolution();
  validate(cfg);
  const auto wall0 = Clock::now();
  const int fps = cfg.fps;
  const int stride = cfg.effective_online_stride();
  const Resolution res = cfg.resolution;

  BoundedQueue<Sequenced> detect_q(cfg.detect_queue);
  BoundedQueue<Sequenced> render_q(cfg.render_queue);
  BoundedQueue<RecognizeRequest> recognize_q(cfg.recognize_queue);
  BoundedQueue<WindowResult> result_q(cfg.result_queue);
  InFlight in_flight(cfg.detect_queue + cfg.render_queue + 2);
  FailureSlot failure;

  auto shutdown_all = [&] {
    in_flight.close();
    detect_q.close();
    render_q.close();
    recognize_q.close();
    result_q.close();
  };

  RunResult result;
  RunReport& rep = result.report;
  rep.mode = "online";
  rep.fps = fps;

  // Per-stage counters; each is written by one thread and read after join.
  std::int64_t frames_in = 0, regressions = 0, detection_drops = 0, frames_detected = 0;
  bool stopped_early = false;
  LatencyStats detect_latency, recognize_latency;

  std::thread capture([&] {
    try {
      std::int64_t seq = 0;
      std::optional<std::int64_t> last_index;
      for (;;) {
        if (failure.aborted) break;
        if (cfg.stop != nullptr && cfg.stop->load()) {
          stopped_early = true;
          break;
        }
        std::optional<FrameEnvelope> frame = source.next();
        if (!frame) break;
        ++frames_in;
        if (last_index && frame->frame_index <= *last_index) {
          ++regressions;
          continue;
        }
        last_index = frame->frame_index;
        if (!in_flight.acquire()) break;
        Sequenced item{seq++, std::move(*frame)};
        switch (cfg.backpressure) {
          case Backpressure::DropOldest:
            if (auto evicted = detect_q.push_evicting(std::move(item))) {
              ++detection_drops;
              render_q.push(std::move(*evicted));
            }
            break;
          case Backpressure::Block:
            detect_q.push(std::move(item));
            break;
          case Backpressure::Strict:
            if (!detect_q.try_push(item)) {
              throw Error(ErrorCode::BackpressureOverflow,
                          "detection queue full at frame " + std::to_string(item.env.frame_index));
            }
            break;
        }
      }
    } catch (...) {
      failure.record(std::current_exception());
      shutdown_all();
    }
    detect_q.close();
  });

  std::thread detect([&] {
    try {
      while (auto item = detect_q.pop()) {
        if (failure.aborted) break;
        FrameEnvelope& env = item->env;
        DetectRequest req{env.path, std::nullopt, env.frame_index, res, env.path.empty() ? env.image : nullptr};
        const auto t0 = Clock::now();
        try {
          env.detections = to_detections(detector.detect(req), res, cfg);
          detect_latency.add(ms_since(t0));
          ++frames_detected;
        } catch (const Error& e) {
          // A slow answer costs this frame its boxes, not the run.
          if (e.code() != ErrorCode::Timeout) rethrow_as_unavailable(e);
          ++detection_drops;
        }
        render_q.push(std::move(*item));
      }
    } catch (...) {
      failure.record(std::current_exception());
      shutdown_all();
    }
    render_q.close();
  });

  std::thread recognize([&] {
    try {
      while (auto req = recognize_q.pop()) {
        if (failure.aborted) break;
        WindowResult r;
        const auto t0 = Clock::now();
        try {
          r.predictions = recognizer.recognize(*req);
          recognize_latency.add(ms_since(t0));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Timeout) rethrow_as_unavailable(e);
          r.failed = true;
        }
        r.request = std::move(*req);
        if (!result_q.push(std::move(r))) break;
      }
    } catch (...) {
      failure.record(std::current_exception());
      shutdown_all();
    }
    result_q.close();
  });

  // Render and window assembly run on the calling thread.
  std::int64_t frames_out = 0, windows_recognized = 0, windows_dropped = 0, windows_failed = 0;
  std::int64_t stale_intervals = 0, stale_frames = 0, partial = 0;
  try {
    std::map<std::int64_t, FrameEnvelope> pending;
    std::int64_t next_seq = 0;
    WindowBuffer window(static_cast<std::size_t>(fps));
    OverlayState overlay(cfg.effective_horizon());
    std::set<std::int64_t> outstanding;
    bool stale = false;
    std::int64_t last_index = -1, last_fired = -1;

    auto take_result = [&](WindowResult r) {
      outstanding.erase(r.request.window_end_index);
      if (r.failed) {
        ++windows_failed;
        return;
      }
      ++windows_recognized;
      auto rows = log_rows(r.request, r.predictions);
      result.log.insert(result.log.end(), rows.begin(), rows.end());
      overlay.apply(r.predictions, r.request);
    };
    auto drain = [&] {
      while (auto r = result_q.try_pop()) take_result(std::move(*r));
    };
    auto submit = [&](RecognizeRequest req) {
      const std::int64_t end = req.window_end_index;
      switch (cfg.backpressure) {
        case Backpressure::DropOldest:
          if (auto evicted = recognize_q.push_evicting(std::move(req))) {
            ++windows_dropped;
            outstanding.erase(evicted->window_end_index);
          }
          break;
        case Backpressure::Block:
          // Keep draining results so the recognizer never waits on us.
          while (!recognize_q.push_for(req, std::chrono::milliseconds(5))) {
            if (failure.aborted || recognize_q.closed()) return;
            drain();
          }
          break;
        case Backpressure::Strict:
          if (!recognize_q.try_push(req)) {
            throw Error(ErrorCode::BackpressureOverflow, "recognition queue full at window " + std::to_string(end));
          }
          break;
      }
      outstanding.insert(end);
    };
    auto show = [&](FrameEnvelope env) {
      drain();
      const std::int64_t index = env.frame_index;
      const std::vector<Detection> dets = env.detections.value_or(std::vector<Detection>{});
      const std::shared_ptr<const Image> image = env.image;
      window.push(std::move(env));
      if (window.full() && fires_at(index, fps, stride)) {
        submit(window.window_request(fps));
        last_fired = index;
      }
      overlay.expire(index);
      const bool now_stale = !outstanding.empty() && index - *outstanding.begin() > fps;
      if (now_stale) {
        ++stale_frames;
        if (!stale) ++stale_intervals;
      }
      stale = now_stale;
      sink.write(index, render_overlay(apply_privacy(*image, dets, cfg), dets, overlay, cfg));
      ++frames_out;
      last_index = index;
      in_flight.release();
    };

    while (auto item = render_q.pop()) {
      if (failure.aborted) break;
      pending.emplace(item->seq, std::move(item->env));
      for (auto it = pending.find(next_seq); it != pending.end(); it = pending.find(next_seq)) {
        FrameEnvelope env = std::move(it->second);
        pending.erase(it);
        ++next_seq;
        show(std::move(env));
      }
    }
    recognize_q.close();
    while (auto r = result_q.pop()) take_result(std::move(*r));
    partial = last_index - last_fired;
  } catch (...) {
    failure.record(std::current_exception());
    shutdown_all();
  }

  capture.join();
  detect.join();
  recognize.join();
  if (failure.error) std::rethrow_exception(failure.error);

  std::sort(result.log.begin(), result.log.end());
  rep.frames_in = frames_in;
  rep.frames_out = frames_out;
  rep.frames_detected = frames_detected;
  rep.detection_drops = detection_drops;
  rep.windows_recognized = windows_recognized;
  rep.windows_dropped = windows_dropped;
  rep.windows_failed = windows_failed;
  rep.partial_window_frames = partial;
  rep.index_regressions = regressions;
  rep.stale_overlay_intervals = stale_intervals;
  rep.stale_frames = stale_frames;
  rep.stopped_early = stopped_early;
  rep.detect_latency = detect_latency;
  rep.recognize_latency = recognize_latency;
  rep.queue_capacity = {{"detect", detect_q.capacity()},
                        {"render", render_q.capacity()},
                        {"recognize", recognize_q.capacity()},
                        {"result", result_q.capacity()},
                        {"in_flight", in_flight.capacity()}};
  rep.queue_max_occupancy = {{"detect", detect_q.max_occupancy()},
                             {"render", render_q.max_occupancy()},
                             {"recognize", recognize_q.max_occupancy()},
                             {"result", result_q.max_occupancy()},
                             {"in_flight", in_flight.max_occupancy()}};
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - wall0).count();
  return result;
}

}  // namespace wardpose::pipeline
