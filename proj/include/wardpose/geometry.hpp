// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wardpose {

// Part ids on the wire: 0..24 are the BODY_25 body parts, 25..94 the 70
// face landmarks. Backends map their model-specific indices onto this.
namespace parts {
inline constexpr int kBodyCount = 25;
inline constexpr int kFaceBase = kBodyCount;
inline constexpr int kFaceCount = 70;
inline constexpr int kTotal = kBodyCount + kFaceCount;

inline constexpr int kNose = 0;
inline constexpr int kRightEye = 15;
inline constexpr int kLeftEye = 16;
inline constexpr int kRightEar = 17;
inline constexpr int kLeftEar = 18;

// Face landmarks plus the head points of the body model.
constexpr bool is_facial(int part_id) noexcept {
  if (part_id >= kFaceBase && part_id < kTotal) return true;
  return part_id == kNose || (part_id >= kRightEye && part_id <= kLeftEar);
}
}  // namespace parts

struct Resolution {
  int width = 0;
  int height = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
  int part_id = 0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

// One subject's keypoints. valid_mask is parallel to points; an empty mask
// means every point was detected.
struct KeypointSet {
  int subject_index = 0;
  std::vector<Keypoint> points;
  std::vector<bool> valid_mask;

  [[nodiscard]] bool is_valid(std::size_t i) const noexcept {
    return valid_mask.empty() || (i < valid_mask.size() && valid_mask[i]);
  }
  // Mean confidence over valid points at or above min_confidence; 0 if none.
  [[nodiscard]] double score(double min_confidence) const noexcept;

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

// Upper-left corner plus extent. l is the HEIGHT and w the WIDTH, matching
// the [x, y, l, w] row layout the action recognizer consumes.
struct SubjectBox {
  double x = 0.0;
  double y = 0.0;
  double l = 0.0;
  double w = 0.0;
  int subject_index = 0;
  friend bool operator==(const SubjectBox&, const SubjectBox&) = default;
};

struct CornerBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  [[nodiscard]] double width() const noexcept { return x2 - x1; }
  [[nodiscard]] double height() const noexcept { return y2 - y1; }
  [[nodiscard]] double area() const noexcept { return width() * height(); }
  [[nodiscard]] double center_x() const noexcept { return 0.5 * (x1 + x2); }
  [[nodiscard]] double center_y() const noexcept { return 0.5 * (y1 + y2); }
  friend bool operator==(const CornerBox&, const CornerBox&) = default;
};

inline constexpr double kDefaultMinConfidence = 0.05;
inline constexpr double kDefaultMargin = 0.0;

// Minimum axis-aligned rectangle over the qualifying points (valid, finite,
// confidence >= min_confidence), grown by margin * extent on each side and
// clamped to [0, frame_w] x [0, frame_h]. Throws NoValidKeypoints.
SubjectBox bbox_from_keypoints(const KeypointSet& kps, double frame_w, double frame_h,
                               double min_confidence = kDefaultMinConfidence,
                               double margin = kDefaultMargin);

// Same rectangle restricted to facial parts; shared with the privacy stage.
// Returns the number of qualifying points through `count`.
CornerBox min_rect_of(const KeypointSet& kps, double min_confidence, bool facial_only,
                      std::size_t& count);

CornerBox expand_and_clamp(const CornerBox& box, double margin, double frame_w, double frame_h);

CornerBox xylw_to_corners(const SubjectBox& b) noexcept;
SubjectBox corners_to_xylw(const CornerBox& c, int subject_index = 0) noexcept;

// Per-axis scaling between resolutions, clamped to to_res. Throws
// InvalidResolution for non-positive dimensions.
CornerBox rescale_box(const CornerBox& b, Resolution from_res, Resolution to_res);

double iou(const CornerBox& a, const CornerBox& b) noexcept;

// IoU of `a` against every box in `others`, written to `out`. Dispatches to
// the widest available kernel; results are bit-identical to iou().
void iou_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out);

// Integer pixel rectangle [x0, x1) x [y0, y1) covering a box, clamped.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  [[nodiscard]] int width() const noexcept { return x1 - x0; }
  [[nodiscard]] int height() const noexcept { return y1 - y0; }
  [[nodiscard]] bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }
  [[nodiscard]] bool contains(int x, int y) const noexcept {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Rounds half away from zero at the boundary, then clamps to the frame.
PixelRect to_pixels(const CornerBox& b, int frame_w, int frame_h) noexcept;

}  // namespace wardpose
