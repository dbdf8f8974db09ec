// SPDX-License-Identifier: Apache-2.0
#pragma once

// Face pixelation driven by facial keypoints.

#include <optional>
#include <span>

#include "wardpose/geometry.hpp"
#include "wardpose/image.hpp"

namespace wardpose::privacy {

inline constexpr double kDefaultFaceMargin = 0.25;
inline constexpr std::size_t kMinFacialPoints = 3;
inline constexpr int kMinBlock = 8;

struct FaceRegion {
  CornerBox box;
  int subject_index = 0;
  friend bool operator==(const FaceRegion&, const FaceRegion&) = default;
};

// Minimum rectangle over valid facial keypoints, grown by `margin` of its
// extent per side and clamped to the frame. nullopt below kMinFacialPoints.
std::optional<FaceRegion> face_region(const KeypointSet& kps, double margin, Resolution frame,
                                      double min_confidence = kDefaultMinConfidence);

// max(kMinBlock, width / 8).
int default_block(const PixelRect& region) noexcept;

// Tiles each region into block x block cells anchored at the region's
// upper-left pixel and replaces every cell by its rounded mean colour.
// block <= 0 selects default_block() per region. Throws BadConfig for
// block == 1.
void pixelate(Image& img, std::span<const PixelRect> regions, int block = 0);

Image blur(const Image& img, std::span<const FaceRegion> regions, int block = 0);

}  // namespace wardpose::privacy
