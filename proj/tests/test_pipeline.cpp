// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "support.hpp"
#include "wardpose/error.hpp"
#include "wardpose/pipeline.hpp"
#include "wardpose/synthetic.hpp"

namespace wardpose::pipeline {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

ActionLabel L(const char* code) { return ActionLabel::from_code(code); }

RunConfig offline_config() {
  RunConfig cfg;
  cfg.fps = 25;
  cfg.resolution = {320, 180};
  return cfg;
}

// --- windowing -------------------------------------------------------------------

TEST(Windowing, FiresAtStride) {
  EXPECT_FALSE(fires_at(23, 25, 1));
  EXPECT_TRUE(fires_at(24, 25, 1));
  EXPECT_TRUE(fires_at(25, 25, 1));
  EXPECT_TRUE(fires_at(24, 25, 25));
  EXPECT_FALSE(fires_at(25, 25, 25));
  EXPECT_TRUE(fires_at(49, 25, 25));
  EXPECT_FALSE(fires_at(30, 0, 1));
  EXPECT_FALSE(fires_at(30, 25, 0));
  int count = 0;
  for (std::int64_t e = 0; e < 1500; ++e) count += fires_at(e, 25, 25) ? 1 : 0;
  EXPECT_EQ(count, 60);
}

TEST(Windowing, BufferHoldsConsecutiveFrames) {
  WindowBuffer w(5);
  for (std::int64_t i = 0; i < 4; ++i) w.push({i, 0.0, nullptr, "f", std::vector<Detection>{}});
  EXPECT_FALSE(w.full());
  EXPECT_THROW((void)w.window_request(5), Error);
  w.push({4, 0.0, nullptr, "f", std::vector<Detection>{}});
  ASSERT_TRUE(w.full());
  w.push({5, 0.0, nullptr, "f", std::vector<Detection>{}});
  EXPECT_EQ(w.frames().front().frame_index, 1);
  const RecognizeRequest r = w.window_request(5);
  EXPECT_EQ(r.window_end_index, 5);
  ASSERT_EQ(r.frames.size(), 5u);
  EXPECT_NO_THROW(validate_window(r));
  // A gap restarts the buffer.
  w.push({9, 0.0, nullptr, "f", std::vector<Detection>{}});
  EXPECT_EQ(w.size(), 1u);
  EXPECT_FALSE(w.full());
}

TEST(Windowing, WindowCarriesBoxesOfEachFrame) {
  WindowBuffer w(3);
  for (std::int64_t i = 0; i < 3; ++i) {
    Detection d;
    d.box = {static_cast<double>(i), 0, 10, 10, 7};
    w.push({i, 0.0, nullptr, "f" + std::to_string(i), std::vector<Detection>{d}});
  }
  const RecognizeRequest r = w.window_request(3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(r.frames[k].frame_path, "f" + std::to_string(k));
    ASSERT_EQ(r.frames[k].boxes.size(), 1u);
    EXPECT_EQ(r.frames[k].boxes[0].x, static_cast<double>(k));
    EXPECT_EQ(r.frames[k].boxes[0].subject_index, 7);
  }
}

TEST(Config, ValidateRejects) {
  auto expect_bad = [](auto mutate) {
    RunConfig cfg;
    mutate(cfg);
    try {
      validate(cfg);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadConfig);
    }
  };
  expect_bad([](RunConfig& c) { c.fps = 0; });
  expect_bad([](RunConfig& c) { c.score_display_threshold = 1.5; });
  expect_bad([](RunConfig& c) { c.top_k = -1; });
  expect_bad([](RunConfig& c) { c.blur_block = 1; });
  expect_bad([](RunConfig& c) { c.offline_stride = 0; });
  expect_bad([](RunConfig& c) { c.detect_queue = 0; });
  EXPECT_NO_THROW(validate(RunConfig{}));
  EXPECT_EQ(RunConfig{}.effective_online_stride(), 25);
  EXPECT_EQ(RunConfig{}.effective_horizon(), 50);
  EXPECT_FALSE(RunConfig{}.watermark);
  EXPECT_EQ(RunConfig{}.score_display_threshold, 0.5);
}

TEST(Detections, DropsEmptyAndTinySubjects) {
  RunConfig cfg = offline_config();
  KeypointSet none;
  none.subject_index = 1;
  KeypointSet dot;
  dot.subject_index = 2;
  dot.points = {{5, 5, 0.9, 0}};
  const KeypointSet fig = synthetic_figure({10, 10, 40, 60}, 0.9, 3);
  const auto d = to_detections({none, dot, fig}, {320, 180}, cfg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].box.subject_index, 3);
  EXPECT_EQ(d[0].box, (SubjectBox{10, 10, 50, 30, 3}));
}

// --- rendering ----------------------------------------------------------------------

constexpr Rgb kFirstColour{230, 57, 70};

Detection det(double x, double y, double w, double l, int subject) {
  Detection d;
  d.box = {x, y, l, w, subject};
  return d;
}

TEST(Render, NoDetectionsNoWatermarkIsIdentity) {
  const Image frame = SyntheticSource::make_frame(3, {96, 54});
  OverlayState overlay(50);
  EXPECT_EQ(render_overlay(frame, {}, overlay, offline_config()), frame);
  RunConfig marked = offline_config();
  marked.watermark = true;
  const Image out = render_overlay(frame, {}, overlay, marked);
  EXPECT_NE(out, frame);
  // The mark stays in the bottom-right corner.
  for (int y = 0; y < 54; ++y) {
    for (int x = 0; x < 96; ++x) {
      if (x < 96 - 60 || y < 54 - 15) {
        ASSERT_EQ(out.at(x, y), frame.at(x, y)) << x << "," << y;
      }
    }
  }
}

TEST(Render, OutlineIsTwoPixelsInsideTheBox) {
  const Image black(100, 60);
  OverlayState overlay(50);
  const std::vector<Detection> d{det(10, 10, 20, 30, 0)};
  const Image out = render_overlay(black, d, overlay, offline_config());
  EXPECT_EQ(out.at(10, 10), kFirstColour);
  EXPECT_EQ(out.at(11, 11), kFirstColour);
  EXPECT_EQ(out.at(29, 39), kFirstColour);
  EXPECT_EQ(out.at(28, 20), kFirstColour);
  EXPECT_EQ(out.at(12, 12), (Rgb{}));
  EXPECT_EQ(out.at(27, 37), (Rgb{}));
  EXPECT_EQ(out.at(9, 9), (Rgb{}));
  EXPECT_EQ(out.at(30, 40), (Rgb{}));
}

TEST(Render, TinyBoxesAreSkipped) {
  const Image black(100, 60);
  OverlayState overlay(50);
  const std::vector<Detection> d{det(10, 10, 1, 1, 0)};
  EXPECT_EQ(render_overlay(black, d, overlay, offline_config()), black);
}

RecognizeRequest one_frame_window(const SubjectBox& box) {
  RecognizeRequest r;
  r.fps = 1;
  r.window_end_index = 0;
  r.frames.push_back({0, "f", std::nullopt, {box}, nullptr});
  return r;
}

TEST(Render, BannersRespectThresholdAndTopK) {
  const Image black(100, 100);
  const Detection d = det(20, 50, 60, 40, 0);
  const std::vector<Detection> ds{d};
  ActionPrediction p{0, {{L("A043"), 0.97}, {L("A042"), 0.8}, {L("A044"), 0.7}, {L("A045"), 0.6}, {L("A046"), 0.4}}, 0};
  OverlayState overlay(50);
  overlay.apply({p}, one_frame_window(d.box));
  const Image out = render_overlay(black, ds, overlay, offline_config());
  // Three banners of height 11 stacked directly above the box.
  EXPECT_EQ(out.at(21, 50 - 33), kFirstColour);
  EXPECT_EQ(out.at(21, 49), kFirstColour);
  EXPECT_EQ(out.at(21, 50 - 34), (Rgb{}));

  RunConfig one = offline_config();
  one.top_k = 1;
  OverlayState o2(50);
  o2.apply({p}, one_frame_window(d.box));
  const Image out1 = render_overlay(black, ds, o2, one);
  EXPECT_EQ(out1.at(21, 39), kFirstColour);
  EXPECT_EQ(out1.at(21, 38), (Rgb{}));

  ActionPrediction low{0, {{L("A046"), 0.4}}, 0};
  OverlayState o3(50);
  o3.apply({low}, one_frame_window(d.box));
  const Image out3 = render_overlay(black, ds, o3, offline_config());
  EXPECT_EQ(out3.at(21, 45), (Rgb{}));
}

TEST(Render, BannerMovesInsideWhenNoRoomAbove) {
  const Image black(100, 60);
  const Detection d = det(10, 3, 60, 40, 0);
  OverlayState overlay(50);
  overlay.apply({ActionPrediction{0, {{L("A043"), 0.97}}, 0}}, one_frame_window(d.box));
  const std::vector<Detection> ds{d};
  const Image out = render_overlay(black, ds, overlay, offline_config());
  EXPECT_EQ(out.at(11, 6), kFirstColour);
  EXPECT_EQ(out.at(11, 2), (Rgb{}));
}

TEST(Overlay, ExpiresAfterHorizon) {
  OverlayState overlay(10);
  const SubjectBox b{0, 0, 10, 10, 0};
  RecognizeRequest w = one_frame_window(b);
  w.window_end_index = 5;
  overlay.apply({ActionPrediction{0, {{L("A043"), 0.9}}, 5}}, w);
  overlay.expire(15);
  EXPECT_EQ(overlay.entries().size(), 1u);
  overlay.expire(16);
  EXPECT_TRUE(overlay.entries().empty());
  EXPECT_EQ(overlay.newest_window(), 5);
}

TEST(Overlay, AssociatesNearestCentroid) {
  OverlayState overlay(50);
  RecognizeRequest w = one_frame_window({0, 0, 10, 10, 0});
  w.frames.back().boxes.push_back({100, 0, 10, 10, 1});
  overlay.apply({ActionPrediction{0, {{L("A043"), 0.9}}, 0}, ActionPrediction{1, {{L("A042"), 0.9}}, 0}}, w);
  const std::vector<Detection> moved{det(95, 2, 10, 10, 5), det(3, 1, 10, 10, 6)};
  const auto m = overlay.associate(moved);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(overlay.entries()[static_cast<std::size_t>(m[0])].prediction.subject_index, 1);
  EXPECT_EQ(overlay.entries()[static_cast<std::size_t>(m[1])].prediction.subject_index, 0);
}

// --- privacy in the pipeline ----------------------------------------------------------

TEST(PipelinePrivacy, BlursOnlyTheFace) {
  const Image frame = SyntheticSource::make_frame(0, {320, 180});
  RunConfig cfg = offline_config();
  Detection d;
  d.keypoints = synthetic_figure({100, 40, 160, 170}, 0.9, 0);
  d.box = bbox_from_keypoints(d.keypoints, 320, 180);
  const std::vector<Detection> ds{d};
  EXPECT_EQ(apply_privacy(frame, ds, cfg), frame);
  cfg.blur_faces = true;
  const Image out = apply_privacy(frame, ds, cfg);
  EXPECT_NE(out, frame);
  for (int y = 0; y < 180; ++y) {
    for (int x = 0; x < 320; ++x) {
      if (x < 90 || x > 170 || y > 65) {
        ASSERT_EQ(out.at(x, y), frame.at(x, y)) << x << "," << y;
      }
    }
  }
}

// --- log --------------------------------------------------------------------------------

TEST(Log, CsvRoundTrip) {
  std::vector<LogRow> rows{{24, 0, L("A042"), 0.62, {100, 40, 160, 170}},
                           {49, 1, L("A043"), 0.1 + 0.2, {0.5, 1.25, 3.0625, 7}}};
  std::ostringstream out;
  write_log_csv(out, rows);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "frame_index,subject_index,label,score,x1,y1,x2,y2");
  std::istringstream in(out.str());
  EXPECT_EQ(read_log_csv(in), rows);
}

TEST(Log, RowsPerScoredLabel) {
  RecognizeRequest w = one_frame_window({10, 20, 30, 40, 2});
  w.window_end_index = 0;
  const auto rows = log_rows(w, {ActionPrediction{2, {{L("A043"), 0.9}, {L("A042"), 0.1}}, 0}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, L("A042"));
  EXPECT_EQ(rows[1].box, (CornerBox{10, 20, 50, 50}));
}

// --- offline runs ------------------------------------------------------------------------

struct FallClip {
  TempDir dir;
  dataset::ClipManifest clip = testing::write_test_clip(dir / "fall", "fall", 75, 25, {320, 180}, "A043", 7);
};

TEST(Offline, FallScenarioLabelsTheFall) {
  FallClip f;
  SyntheticBackend backend(parse_script(testing::fall_script(74, 50)));
  DigestSink sink;
  const RunResult r = run_offline(f.clip, backend, backend, offline_config(), sink);
  EXPECT_EQ(r.report.frames_in, 75);
  EXPECT_EQ(r.report.frames_out, 75);
  EXPECT_EQ(r.report.windows_recognized, 51);
  EXPECT_EQ(r.report.partial_window_frames, 0);
  EXPECT_EQ(sink.indices.size(), 75u);

  std::map<std::int64_t, std::pair<ActionLabel, double>> top;
  for (const LogRow& row : r.log) {
    EXPECT_EQ(row.subject_index, 0);
    EXPECT_EQ(row.box, (CornerBox{100, 40, 160, 170}));
    auto it = top.find(row.frame_index);
    if (it == top.end() || row.score > it->second.second) top[row.frame_index] = {row.label, row.score};
  }
  ASSERT_EQ(top.size(), 51u);
  for (const auto& [end, best] : top) {
    if (end >= 50) {
      EXPECT_EQ(best.first, L("A043")) << end;
      EXPECT_DOUBLE_EQ(best.second, 0.97);
    } else {
      EXPECT_EQ(best.first, L("A042")) << end;
    }
  }
}

TEST(Offline, RunsAreByteIdentical) {
  FallClip f;
  SyntheticBackend backend(parse_script(testing::fall_script(74, 50)));
  auto run = [&](const fs::path& out) {
    DirectorySink sink(out / "frames");
    const RunResult r = run_offline(f.clip, backend, backend, offline_config(), sink);
    std::ostringstream log;
    write_log_csv(log, r.log);
    testing::write_file(out / "predictions.csv", log.str());
    return testing::snapshot(out);
  };
  TempDir a, b;
  const auto first = run(a.path());
  EXPECT_EQ(first.size(), 76u);
  EXPECT_EQ(first, run(b.path()));
}

TEST(Offline, EmptySceneLeavesFramesUntouched) {
  FallClip f;
  SyntheticBackend backend(parse_script(testing::empty_scene_script()));
  CollectSink sink;
  const RunResult r = run_offline(f.clip, backend, backend, offline_config(), sink);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.report.windows_recognized, 51);
  ASSERT_EQ(sink.frames.size(), 75u);
  for (std::size_t i = 0; i < 75; ++i) ASSERT_EQ(sink.frames[i], dataset::load_frame(f.clip, i)) << i;
}

TEST(Offline, StrideSelectsWindows) {
  FallClip f;
  SyntheticBackend backend(parse_script(testing::fall_script(74, 50)));
  RunConfig cfg = offline_config();
  cfg.offline_stride = 25;
  DigestSink sink;
  const RunResult r = run_offline(f.clip, backend, backend, cfg, sink);
  EXPECT_EQ(r.report.windows_recognized, 3);
  std::set<std::int64_t> ends;
  for (const LogRow& row : r.log) ends.insert(row.frame_index);
  EXPECT_EQ(ends, (std::set<std::int64_t>{24, 49, 74}));
}

TEST(Offline, OneSecondClipIsTooShort) {
  TempDir dir;
  const auto clip = testing::write_test_clip(dir / "short", "short", 25, 25, {320, 180}, "A043");
  SyntheticBackend backend(parse_script(testing::fall_script(74, 50)));
  DigestSink sink;
  try {
    run_offline(clip, backend, backend, offline_config(), sink);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClipTooShort);
  }
  EXPECT_TRUE(sink.indices.empty());
  const auto ok = testing::write_test_clip(dir / "ok", "ok", 26, 25, {320, 180}, "A043");
  EXPECT_EQ(run_offline(ok, backend, backend, offline_config(), sink).report.windows_recognized, 2);
}

TEST(Offline, LostBackendIsUnavailable) {
  FallClip f;
  class Gone final : public InferenceBackend {
   public:
    Capabilities capabilities() override { return {}; }
    std::vector<KeypointSet> detect(const DetectRequest&) override {
      throw Error(ErrorCode::ChannelClosed, "peer closed");
    }
    std::vector<ActionPrediction> recognize(const RecognizeRequest&) override { return {}; }
  } gone;
  DigestSink sink;
  try {
    run_offline(f.clip, gone, gone, offline_config(), sink);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
  }
}

TEST(Sources, SyntheticFramesAreDeterministic) {
  EXPECT_EQ(SyntheticSource::make_frame(17, {64, 36}), SyntheticSource::make_frame(17, {64, 36}));
  EXPECT_NE(SyntheticSource::make_frame(17, {64, 36}), SyntheticSource::make_frame(18, {64, 36}));
  SyntheticSource src(3, 25, {64, 36});
  for (std::int64_t i = 0; i < 3; ++i) {
    const auto f = src.next();
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->frame_index, i);
    EXPECT_DOUBLE_EQ(f->timestamp, i / 25.0);
  }
  EXPECT_FALSE(src.next().has_value());
}

TEST(Sources, ClipSourceReadsFrames) {
  FallClip f;
  ClipSource src(f.clip);
  EXPECT_EQ(src.fps(), 25);
  std::int64_t n = 0;
  while (auto fr = src.next()) {
    ASSERT_TRUE(fr->image);
    EXPECT_EQ(fr->frame_index, n++);
  }
  EXPECT_EQ(n, 75);
}

}  // namespace
}  // namespace wardpose::pipeline
