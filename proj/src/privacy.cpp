// SPDX-License-Identifier: Apache-2.0
#include "wardpose/privacy.hpp"

#include <algorithm>
#include <vector>

#include "wardpose/error.hpp"
#include "wardpose/kernels.hpp"

namespace wardpose::privacy {

std::optional<FaceRegion> face_region(const KeypointSet& kps, double margin, Resolution frame,
                                      double min_confidence) {
  std::size_t count = 0;
  const CornerBox raw = min_rect_of(kps, min_confidence, /*facial_only=*/true, count);
  if (count < kMinFacialPoints) return std::nullopt;
  return FaceRegion{expand_and_clamp(raw, margin, frame.width, frame.height), kps.subject_index};
}

int default_block(const PixelRect& region) noexcept { return std::max(kMinBlock, region.width() / 8); }

namespace {

std::uint8_t rounded_mean(std::uint64_t sum, std::uint64_t n) {
  return static_cast<std::uint8_t>((sum + n / 2) / n);
}

void pixelate_one(Image& img, const PixelRect& r, int block) {
  for (int cy = r.y0; cy < r.y1; cy += block) {
    const int cy1 = std::min(cy + block, r.y1);
    for (int cx = r.x0; cx < r.x1; cx += block) {
      const int cx1 = std::min(cx + block, r.x1);
      kernels::RgbSum total;
      for (int y = cy; y < cy1; ++y) {
        const kernels::RgbSum s = kernels::rgb_sum(img.row(y, cx, cx1));
        total.r += s.r;
        total.g += s.g;
        total.b += s.b;
      }
      const auto n = static_cast<std::uint64_t>(cx1 - cx) * static_cast<std::uint64_t>(cy1 - cy);
      img.fill_rect({cx, cy, cx1, cy1}, {rounded_mean(total.r, n), rounded_mean(total.g, n), rounded_mean(total.b, n)});
    }
  }
}

}  // namespace

void pixelate(Image& img, std::span<const PixelRect> regions, int block) {
  if (block == 1) throw Error(ErrorCode::BadConfig, "blur block must be at least 2");
  for (const PixelRect& raw : regions) {
    const PixelRect r{std::max(raw.x0, 0), std::max(raw.y0, 0), std::min(raw.x1, img.width()),
                      std::min(raw.y1, img.height())};
    if (r.empty()) continue;
    pixelate_one(img, r, block > 0 ? block : default_block(r));
  }
}

Image blur(const Image& img, std::span<const FaceRegion> regions, int block) {
  std::vector<PixelRect> rects;
  rects.reserve(regions.size());
  for (const FaceRegion& f : regions) rects.push_back(to_pixels(f.box, img.width(), img.height()));
  Image out = img;
  pixelate(out, rects, block);
  return out;
}

}  // namespace wardpose::privacy
