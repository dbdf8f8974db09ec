// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "wardpose/kernels.hpp"

namespace wardpose::kernels::scalar {

MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept {
  constexpr double inf = std::numeric_limits<double>::infinity();
  MinMax m{inf, inf, -inf, -inf, 0};
  const std::size_t n = pts.x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pts.x[i];
    const double y = pts.y[i];
    if (pts.valid[i] == 0 || !(pts.confidence[i] >= min_confidence)) continue;
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    m.min_x = std::min(m.min_x, x);
    m.min_y = std::min(m.min_y, y);
    m.max_x = std::max(m.max_x, x);
    m.max_y = std::max(m.max_y, y);
    ++m.count;
  }
  return m;
}

void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept {
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  for (std::size_t i = 0; i < others.size(); ++i) {
    const CornerBox& b = others[i];
    const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = iw * ih;
    const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    const double uni = (area_a + area_b) - inter;
    out[i] = uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
  }
}

RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept {
  RgbSum s;
  for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
    s.r += pixels[i];
    s.g += pixels[i + 1];
    s.b += pixels[i + 2];
  }
  return s;
}

}  // namespace wardpose::kernels::scalar
