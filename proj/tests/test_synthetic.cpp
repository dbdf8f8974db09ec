// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"
#include "wardpose/error.hpp"
#include "wardpose/protocol.hpp"
#include "wardpose/remote.hpp"
#include "wardpose/synthetic.hpp"

namespace wardpose {
namespace {

using nlohmann::json;

ActionLabel L(const char* code) { return ActionLabel::from_code(code); }

RecognizeRequest window_of(int fps, std::int64_t end, std::vector<SubjectBox> last_boxes) {
  RecognizeRequest r;
  r.fps = fps;
  r.window_end_index = end;
  for (std::int64_t i = end - fps + 1; i <= end; ++i) r.frames.push_back({i, "f", std::nullopt, {}, nullptr});
  r.frames.back().boxes = std::move(last_boxes);
  return r;
}

json two_subjects() {
  return {{"name", "pair"},
          {"detect",
           {{"frames",
             {{"12",
               {{{"subject_index", 0}, {"box", {10, 20, 110, 220}}, {"confidence", 0.9}},
                {{"subject_index", 1}, {"box", {300, 40, 360, 200}}, {"confidence", 0.7}}}}}}}},
          {"recognize",
           {{"windows",
             {{"24",
               {{{"subject_index", 0}, {"scores", {{"A043", 0.97}}}},
                {{"subject_index", 1}, {"scores", {{"A042", 0.55}, {"A103", 0.2}}}}}}}}}}};
}

TEST(SyntheticFigure, ExtremesAreTheBoxCorners) {
  const CornerBox box{10, 20, 110, 220};
  const KeypointSet k = synthetic_figure(box, 0.9, 3);
  EXPECT_EQ(k.subject_index, 3);
  EXPECT_EQ(k.points.size(), 35u);
  EXPECT_EQ(xylw_to_corners(bbox_from_keypoints(k, 640, 360)), box);
  std::size_t n = 0;
  const CornerBox face = min_rect_of(k, 0.05, true, n);
  EXPECT_EQ(n, 15u);
  EXPECT_GE(face.x1, 10 + 0.42 * 100 - 1e-9);
  EXPECT_LE(face.x2, 10 + 0.58 * 100 + 1e-9);
  EXPECT_LE(face.y2, 20 + 0.13 * 200 + 1e-9);
  EXPECT_NEAR(k.score(0.05), 0.9, 1e-12);
}

TEST(SyntheticBackend, TwoSubjectsOnScriptedFrame) {
  SyntheticBackend b(parse_script(two_subjects()));
  const auto subjects = b.detect({"any", std::nullopt, 12, {640, 360}, nullptr});
  ASSERT_EQ(subjects.size(), 2u);
  EXPECT_EQ(subjects[0].subject_index, 0);
  EXPECT_EQ(subjects[1].subject_index, 1);
  EXPECT_EQ(xylw_to_corners(bbox_from_keypoints(subjects[1], 640, 360)), (CornerBox{300, 40, 360, 200}));
  EXPECT_TRUE(b.detect({"any", std::nullopt, 13, {640, 360}, nullptr}).empty());
}

TEST(SyntheticBackend, EmptySceneDetectsNothing) {
  SyntheticBackend b(parse_script(testing::empty_scene_script()));
  for (std::int64_t i = 0; i < 100; ++i) EXPECT_TRUE(b.detect({"x", std::nullopt, i, {320, 180}, nullptr}).empty());
  EXPECT_TRUE(b.recognize(window_of(25, 24, {})).empty());
  EXPECT_EQ(b.capabilities().name, "synthetic:empty");
}

TEST(SyntheticBackend, ScriptedPredictions) {
  SyntheticBackend b(parse_script(two_subjects()));
  const auto preds = b.recognize(window_of(25, 24, {{10, 20, 200, 100, 0}, {300, 40, 160, 60, 1}}));
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[0].subject_index, 0);
  EXPECT_EQ(preds[0].window_end_index, 24);
  EXPECT_DOUBLE_EQ(preds[0].scores.at(L("A043")), 0.97);
  EXPECT_DOUBLE_EQ(preds[1].scores.at(L("A042")), 0.55);
  validate_predictions(window_of(25, 24, {{10, 20, 200, 100, 0}, {300, 40, 160, 60, 1}}), preds);
}

TEST(SyntheticBackend, AbsentSubjectIsNotPredicted) {
  SyntheticBackend b(parse_script(two_subjects()));
  const auto preds = b.recognize(window_of(25, 24, {{300, 40, 160, 60, 1}}));
  ASSERT_EQ(preds.size(), 1u);
  EXPECT_EQ(preds[0].subject_index, 1);
}

TEST(SyntheticBackend, UnscriptedWindowYieldsNothing) {
  SyntheticBackend b(parse_script(two_subjects()));
  EXPECT_TRUE(b.recognize(window_of(25, 30, {{10, 20, 200, 100, 0}})).empty());
}

TEST(SyntheticBackend, ShortWindowIsBadWindow) {
  SyntheticBackend b(parse_script(two_subjects()));
  RecognizeRequest r = window_of(25, 24, {});
  r.frames.erase(r.frames.begin());
  try {
    b.recognize(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadWindow);
  }
  r = window_of(25, 24, {});
  r.frames[3].frame_index = 99;
  EXPECT_THROW(b.recognize(r), Error);
}

TEST(SyntheticBackend, FallScriptSwitchesAtFallStart) {
  SyntheticBackend b(parse_script(testing::fall_script(74, 50)));
  const SubjectBox s{100, 40, 130, 60, 0};
  EXPECT_DOUBLE_EQ(b.recognize(window_of(25, 49, {s}))[0].scores.at(L("A042")), 0.62);
  for (std::int64_t e = 50; e <= 74; ++e) {
    const auto p = b.recognize(window_of(25, e, {s}));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_DOUBLE_EQ(p[0].scores.at(L("A043")), 0.97);
  }
  EXPECT_TRUE(b.recognize(window_of(25, 75, {s})).empty());
}

TEST(SyntheticBackend, LookupOrderPathsThenFramesThenRanges) {
  const json subj0 = {{"subject_index", 0}, {"box", {0, 0, 10, 10}}};
  const json subj1 = {{"subject_index", 1}, {"box", {0, 0, 10, 10}}};
  const json subj2 = {{"subject_index", 2}, {"box", {0, 0, 10, 10}}};
  SyntheticBackend b(parse_script({{"detect",
                                    {{"paths", {{{"match", "clip7"}, {"subjects", {subj0}}}}},
                                     {"frames", {{"5", {subj1}}}},
                                     {"ranges", {{{"from", 0}, {"to", 9}, {"subjects", {subj2}}}}}}}}));
  EXPECT_EQ(b.detect({"data/clip7/5.ppm", std::nullopt, 5, {64, 36}, nullptr})[0].subject_index, 0);
  EXPECT_EQ(b.detect({"data/clip8/5.ppm", std::nullopt, 5, {64, 36}, nullptr})[0].subject_index, 1);
  EXPECT_EQ(b.detect({"data/clip8/6.ppm", std::nullopt, 6, {64, 36}, nullptr})[0].subject_index, 2);
  EXPECT_TRUE(b.detect({"data/clip8/10.ppm", std::nullopt, 10, {64, 36}, nullptr}).empty());
}

TEST(SyntheticBackend, ThousandsOfCallsStayDeterministic) {
  SyntheticBackend a(parse_script(testing::fall_script(1499, 700)));
  SyntheticBackend b(parse_script(testing::fall_script(1499, 700)));
  for (std::int64_t i = 0; i < 1500; ++i) {
    const DetectRequest r{"f", std::nullopt, i, {320, 180}, nullptr};
    const auto x = a.detect(r);
    ASSERT_EQ(x.size(), 1u);
    ASSERT_EQ(x, b.detect(r));
  }
}

// Same request sequence over the wire twice: identical response bytes.
TEST(SyntheticBackend, TranscriptIsReproducible) {
  auto transcript = [] {
    SyntheticBackend backend(parse_script(testing::fall_script(74, 50)));
    auto [host, server] = make_channel_pair();
    std::thread t([&backend, s = server.get()] {
      serve(backend, *s);
      s->close();
    });
    std::string out;
    std::uint64_t id = 1;
    for (std::int64_t i = 0; i < 75; ++i) {
      protocol::write_message(*host, {kProtocolVersion, id++, protocol::Kind::Detect,
                                      protocol::to_json(DetectRequest{"f", std::nullopt, i, {320, 180}, nullptr})});
      out += protocol::read_frame(*host, std::chrono::steady_clock::now() + std::chrono::seconds(5));
      if (i >= 24) {
        protocol::write_message(*host, {kProtocolVersion, id++, protocol::Kind::Recognize,
                                        protocol::to_json(window_of(25, i, {{100, 40, 130, 60, 0}}))});
        out += protocol::read_frame(*host, std::chrono::steady_clock::now() + std::chrono::seconds(5));
      }
    }
    host->close();
    t.join();
    return out;
  };
  const std::string first = transcript();
  EXPECT_GT(first.size(), 1000u);
  EXPECT_EQ(first, transcript());
}

TEST(SyntheticScript, Rejections) {
  const std::vector<json> bad = {
      json::array(),
      {{"nme", "typo"}},
      {{"detect", {{"frames", {{"x", json::array()}}}}}},
      {{"detect", {{"frames", {{"1", {{{"box", {0, 0, 1, 1}}}}}}}}}},
      {{"detect", {{"frames", {{"1", {{{"subject_index", 0}, {"box", {5, 0, 1, 1}}}}}}}}}},
      {{"detect", {{"frames", {{"1", {{{"subject_index", 0}, {"box", {0, 0, 1, 1}}, {"points", json::array()}}}}}}}}},
      {{"detect", {{"delay_ms", -1}}}},
      {{"detect", {{"ranges", {{{"from", 0}, {"to", 3}, {"subjects", {{{"subject_index", 0}, {"points", {{99, 1, 1, 0.5}}}}}}}}}}}},
      {{"recognize", {{"windows", {{"5", {{{"subject_index", 0}, {"scores", {{"A999", 0.5}}}}}}}}}}},
      {{"recognize", {{"windows", {{"5", {{{"subject_index", 0}, {"scores", {{"A043", 1.5}}}}}}}}}}},
      {{"recognize", {{"windows", {{"5", {{{"subject_index", 0}, {"scores", json::object()}}}}}}}}},
      {{"recognize", {{"windows", {{"5", {{{"subject_index", "all"}, {"scores", {{"A043", 0.5}}}}}}}}}}},
  };
  for (const json& j : bad) {
    try {
      parse_script(j);
      ADD_FAILURE() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadScript) << j.dump();
    }
  }
}

TEST(SyntheticScript, LoadFromDisk) {
  testing::TempDir tmp;
  testing::write_file(tmp / "ok.json", two_subjects().dump());
  EXPECT_EQ(load_script(tmp / "ok.json").name, "pair");
  testing::write_file(tmp / "broken.json", "{\"name\": ");
  EXPECT_THROW(load_script(tmp / "broken.json"), Error);
  try {
    load_script(tmp / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadScript);
  }
}

}  // namespace
}  // namespace wardpose
