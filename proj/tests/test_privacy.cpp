// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "generators.hpp"
#include "oracles.hpp"
#include "wardpose/error.hpp"
#include "wardpose/privacy.hpp"
#include "wardpose/synthetic.hpp"

namespace wardpose::privacy {
namespace {

TEST(Pixelate, OnlyTouchesTheRegionAndMatchesOracle) {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int> dim(16, 120);
  for (int t = 0; t < 100; ++t) {
    const int w = dim(rng), h = dim(rng);
    const Image src = testing::noise_image(w, h, rng);
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    int x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const PixelRect r{x0, y0, x1 + 1, y1 + 1};
    const int block = std::uniform_int_distribution<int>(2, 12)(rng);
    Image out = src;
    pixelate(out, std::span(&r, 1), block);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!r.contains(x, y)) {
          ASSERT_EQ(out.at(x, y), src.at(x, y)) << "frame " << t;
        }
      }
    }
    ASSERT_EQ(out, oracle::pixelate(src, r, block)) << "frame " << t;
  }
}

TEST(Pixelate, Idempotent) {
  std::mt19937_64 rng(62);
  for (int t = 0; t < 50; ++t) {
    Image img = testing::noise_image(64, 48, rng);
    const PixelRect r{5, 3, 50, 40};
    pixelate(img, std::span(&r, 1));
    const Image once = img;
    pixelate(img, std::span(&r, 1));
    ASSERT_EQ(img, once);
  }
}

TEST(Pixelate, CheckerboardCellAveragesTo128) {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const std::uint8_t v = (x + y) % 2 == 0 ? 0 : 255;
      img.set(x, y, {v, v, v});
    }
  }
  const PixelRect r{0, 0, 8, 8};
  pixelate(img, std::span(&r, 1), 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) ASSERT_EQ(img.at(x, y), (Rgb{128, 128, 128}));
  }
}

TEST(Pixelate, UniformRegionUnchanged) {
  Image img(40, 30, {17, 99, 200});
  const Image before = img;
  const PixelRect r{3, 4, 37, 29};
  pixelate(img, std::span(&r, 1), 5);
  EXPECT_EQ(img, before);
}

TEST(Pixelate, EmptyAndOutOfFrameRegions) {
  std::mt19937_64 rng(63);
  Image img = testing::noise_image(32, 32, rng);
  const Image before = img;
  const std::vector<PixelRect> rs{{5, 5, 5, 10}, {40, 40, 60, 60}, {-10, -10, 0, 0}};
  pixelate(img, rs);
  EXPECT_EQ(img, before);
  pixelate(img, {});
  EXPECT_EQ(img, before);
}

TEST(Pixelate, BlockSizes) {
  EXPECT_EQ(default_block({0, 0, 40, 40}), 8);
  EXPECT_EQ(default_block({0, 0, 160, 40}), 20);
  Image img(16, 16);
  const PixelRect r{0, 0, 16, 16};
  try {
    pixelate(img, std::span(&r, 1), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
}

TEST(FaceRegion, FromSyntheticFigure) {
  const KeypointSet k = synthetic_figure({100, 40, 160, 170}, 0.9, 4);
  const auto f = face_region(k, 0.0, {320, 180});
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->subject_index, 4);
  EXPECT_NEAR(f->box.x1, 100 + 0.42 * 60, 1e-9);
  EXPECT_NEAR(f->box.x2, 100 + 0.58 * 60, 1e-9);
  EXPECT_NEAR(f->box.y1, 40, 1e-9);
  EXPECT_NEAR(f->box.y2, 40 + 0.13 * 130, 1e-9);
  const auto grown = face_region(k, 0.25, {320, 180});
  ASSERT_TRUE(grown.has_value());
  EXPECT_NEAR(grown->box.x1, f->box.x1 - 0.25 * f->box.width(), 1e-9);
  EXPECT_NEAR(grown->box.y1, 40 - 0.25 * f->box.height(), 1e-9);
}

TEST(FaceRegion, NeedsThreeFacialPoints) {
  KeypointSet k;
  k.points = {{10, 10, 0.9, parts::kNose}, {12, 10, 0.9, parts::kRightEye}, {50, 50, 0.9, 8}};
  EXPECT_FALSE(face_region(k, 0.0, {64, 64}).has_value());
  k.points.push_back({14, 12, 0.9, parts::kFaceBase + 30});
  const auto f = face_region(k, 0.0, {64, 64});
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->box, (CornerBox{10, 10, 14, 12}));
  k.points.back().confidence = 0.01;
  EXPECT_FALSE(face_region(k, 0.0, {64, 64}).has_value());
}

TEST(FaceRegion, ClampedToFrame) {
  KeypointSet k;
  k.points = {{0, 0, 0.9, parts::kNose}, {20, 0, 0.9, parts::kLeftEye}, {10, 10, 0.9, parts::kLeftEar}};
  const auto f = face_region(k, 0.5, {15, 8});
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->box, (CornerBox{0, 0, 15, 8}));
}

TEST(Blur, LeavesOriginalIntact) {
  std::mt19937_64 rng(64);
  const Image src = testing::noise_image(80, 60, rng);
  const std::vector<FaceRegion> faces{{{10.2, 5.6, 30.4, 25.5}, 0}};
  const Image out = blur(src, faces);
  EXPECT_NE(out, src);
  const PixelRect r = to_pixels(faces[0].box, 80, 60);
  EXPECT_EQ(out, oracle::pixelate(src, r, default_block(r)));
}

}  // namespace
}  // namespace wardpose::privacy
