// SPDX-License-Identifier: Apache-2.0
#include "wardpose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wardpose/error.hpp"
#include "wardpose/kernels.hpp"

namespace wardpose {

double KeypointSet::score(double min_confidence) const noexcept {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!is_valid(i) || !(points[i].confidence >= min_confidence)) continue;
    sum += points[i].confidence;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

CornerBox min_rect_of(const KeypointSet& kps, double min_confidence, bool facial_only, std::size_t& count) {
  const std::size_t n = kps.points.size();
  std::vector<double> xs(n), ys(n), cs(n);
  std::vector<std::uint8_t> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Keypoint& p = kps.points[i];
    xs[i] = p.x;
    ys[i] = p.y;
    cs[i] = p.confidence;
    valid[i] = kps.is_valid(i) && (!facial_only || parts::is_facial(p.part_id)) ? 1 : 0;
  }
  const kernels::MinMax m = kernels::masked_minmax({xs, ys, cs, valid}, min_confidence);
  count = m.count;
  if (m.count == 0) return {};
  return {m.min_x, m.min_y, m.max_x, m.max_y};
}

CornerBox expand_and_clamp(const CornerBox& box, double margin, double frame_w, double frame_h) {
  const double dx = margin * box.width();
  const double dy = margin * box.height();
  CornerBox out{box.x1 - dx, box.y1 - dy, box.x2 + dx, box.y2 + dy};
  out.x1 = std::clamp(out.x1, 0.0, frame_w);
  out.x2 = std::clamp(out.x2, 0.0, frame_w);
  out.y1 = std::clamp(out.y1, 0.0, frame_h);
  out.y2 = std::clamp(out.y2, 0.0, frame_h);
  return out;
}

SubjectBox bbox_from_keypoints(const KeypointSet& kps, double frame_w, double frame_h, double min_confidence,
                               double margin) {
  if (!(frame_w > 0.0) || !(frame_h > 0.0)) {
    throw Error(ErrorCode::InvalidResolution, "frame bounds must be positive");
  }
  std::size_t count = 0;
  const CornerBox raw = min_rect_of(kps, min_confidence, /*facial_only=*/false, count);
  if (count == 0) {
    throw Error(ErrorCode::NoValidKeypoints,
                "subject " + std::to_string(kps.subject_index) + " has no keypoint at confidence >= " +
                    std::to_string(min_confidence));
  }
  return corners_to_xylw(expand_and_clamp(raw, margin, frame_w, frame_h), kps.subject_index);
}

CornerBox xylw_to_corners(const SubjectBox& b) noexcept { return {b.x, b.y, b.x + b.w, b.y + b.l}; }

SubjectBox corners_to_xylw(const CornerBox& c, int subject_index) noexcept {
  return {c.x1, c.y1, c.y2 - c.y1, c.x2 - c.x1, subject_index};
}

CornerBox rescale_box(const CornerBox& b, Resolution from_res, Resolution to_res) {
  if (from_res.width <= 0 || from_res.height <= 0 || to_res.width <= 0 || to_res.height <= 0) {
    throw Error(ErrorCode::InvalidResolution, "resolutions must be strictly positive");
  }
  const double sx = static_cast<double>(to_res.width) / from_res.width;
  const double sy = static_cast<double>(to_res.height) / from_res.height;
  const double w = to_res.width;
  const double h = to_res.height;
  return {std::clamp(b.x1 * sx, 0.0, w), std::clamp(b.y1 * sy, 0.0, h), std::clamp(b.x2 * sx, 0.0, w),
          std::clamp(b.y2 * sy, 0.0, h)};
}

double iou(const CornerBox& a, const CornerBox& b) noexcept {
  double out = 0.0;
  kernels::scalar::iou_one_to_many(a, std::span(&b, 1), std::span(&out, 1));
  return out;
}

void iou_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) {
  kernels::iou_one_to_many(a, others, out);
}

PixelRect to_pixels(const CornerBox& b, int frame_w, int frame_h) noexcept {
  auto px = [](double v, int hi) {
    const double r = std::round(v);
    if (!(r >= 0.0)) return 0;
    return r >= hi ? hi : static_cast<int>(r);
  };
  return {px(b.x1, frame_w), px(b.y1, frame_h), px(b.x2, frame_w), px(b.y2, frame_h)};
}

}  // namespace wardpose
