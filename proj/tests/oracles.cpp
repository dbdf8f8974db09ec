// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace wardpose::oracle {

bool bbox(const KeypointSet& kps, double frame_w, double frame_h, double min_confidence, double margin,
          CornerBox& out) {
  bool any = false;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  for (std::size_t i = 0; i < kps.points.size(); ++i) {
    const Keypoint& p = kps.points[i];
    if (!kps.is_valid(i) || p.confidence < min_confidence) continue;
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    if (!any) {
      x1 = x2 = p.x;
      y1 = y2 = p.y;
      any = true;
      continue;
    }
    if (p.x < x1) x1 = p.x;
    if (p.x > x2) x2 = p.x;
    if (p.y < y1) y1 = p.y;
    if (p.y > y2) y2 = p.y;
  }
  if (!any) return false;
  const double gx = margin * (x2 - x1);
  const double gy = margin * (y2 - y1);
  auto clamp = [](double v, double hi) { return v < 0 ? 0.0 : (v > hi ? hi : v); };
  out = {clamp(x1 - gx, frame_w), clamp(y1 - gy, frame_h), clamp(x2 + gx, frame_w), clamp(y2 + gy, frame_h)};
  return true;
}

double pixel_grid_iou(const CornerBox& a, const CornerBox& b) {
  const auto lo = static_cast<int>(std::min({a.x1, a.y1, b.x1, b.y1}));
  const auto hi = static_cast<int>(std::max({a.x2, a.y2, b.x2, b.y2}));
  std::int64_t inter = 0, uni = 0;
  for (int y = lo; y < hi; ++y) {
    for (int x = lo; x < hi; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool in_a = cx > a.x1 && cx < a.x2 && cy > a.y1 && cy < a.y2;
      const bool in_b = cx > b.x1 && cx < b.x2 && cy > b.y1 && cy < b.y2;
      inter += (in_a && in_b) ? 1 : 0;
      uni += (in_a || in_b) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::size_t> extend_indices(std::size_t length, int fps) {
  const std::size_t f = static_cast<std::size_t>(fps);
  std::vector<std::size_t> out;
  if (length >= 3 * f) {
    for (std::size_t i = 0; i < length; ++i) out.push_back(i);
    return out;
  }
  if (length < 2 * f) {
    for (std::size_t i = 0; i < 2 * f - length; ++i) out.push_back(0);
  }
  for (std::size_t i = 0; i < length; ++i) out.push_back(i);
  while (out.size() < 3 * f) out.push_back(length - 1);
  return out;
}

std::vector<std::size_t> resample_indices(std::size_t length, int from_fps, int to_fps) {
  const auto out_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                      static_cast<double>(length) * static_cast<double>(to_fps) /
                                                      static_cast<double>(from_fps))));
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < out_len; ++k) {
    // Integer rounding of k * from / to, halves away from zero.
    const std::uint64_t num = 2 * k * static_cast<std::uint64_t>(from_fps) + static_cast<std::uint64_t>(to_fps);
    std::size_t src = static_cast<std::size_t>(num / (2 * static_cast<std::uint64_t>(to_fps)));
    out.push_back(std::min(src, length - 1));
  }
  return out;
}

namespace {

double exact_iou(const CornerBox& a, const CornerBox& b) {
  const auto ix = static_cast<std::int64_t>(std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1)));
  const auto iy = static_cast<std::int64_t>(std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1)));
  const auto area_a = static_cast<std::int64_t>((a.x2 - a.x1) * (a.y2 - a.y1));
  const auto area_b = static_cast<std::int64_t>((b.x2 - b.x1) * (b.y2 - b.y1));
  const std::int64_t inter = ix * iy;
  const std::int64_t uni = area_a + area_b - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace

double ap_of_ranking(const std::vector<bool>& ranked_tp, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision_at(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += ranked_tp[k] ? 1 : 0;
    precision_at[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!ranked_tp[k]) continue;
    double best = 0.0;
    for (std::size_t j = k; j < n; ++j) best = std::max(best, precision_at[j]);
    ap += best / static_cast<double>(num_gt);
  }
  return ap;
}

Metrics evaluate(const std::vector<metrics::GroundTruthItem>& gt, const std::vector<metrics::PredictionItem>& preds,
                 double iou_threshold) {
  Metrics m;
  const std::size_t classes = ActionLabel::kCount;
  std::vector<bool> claimed(gt.size(), false);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t num_gt = 0;
    for (const auto& g : gt) num_gt += g.label.index() == c ? 1 : 0;
    if (num_gt == 0) continue;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].label.index() == c) order.push_back(i);
    }
    // Insertion sort: descending score, ties keep input order.
    for (std::size_t i = 1; i < order.size(); ++i) {
      for (std::size_t j = i; j > 0 && preds[order[j]].score > preds[order[j - 1]].score; --j) {
        std::swap(order[j], order[j - 1]);
      }
    }
    std::vector<bool> ranked;
    for (const std::size_t pi : order) {
      std::size_t best = gt.size();
      double best_iou = -1.0;
      for (std::size_t gi = 0; gi < gt.size(); ++gi) {
        if (claimed[gi] || gt[gi].label.index() != c || gt[gi].image_id != preds[pi].image_id) continue;
        const double v = exact_iou(preds[pi].box, gt[gi].box);
        if (v >= iou_threshold && v > best_iou) {
          best_iou = v;
          best = gi;
        }
      }
      if (best < gt.size()) claimed[best] = true;
      ranked.push_back(best < gt.size());
    }
    m.ap[c] = ap_of_ranking(ranked, num_gt);
  }
  double sum = 0.0;
  for (const auto& [c, ap] : m.ap) sum += ap;
  m.map = m.ap.empty() ? 0.0 : sum / static_cast<double>(m.ap.size());

  // Classification: one ground truth per image.
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (const auto& g : gt) {
    std::size_t predicted = classes;
    double best_score = -1.0;
    for (const auto& p : preds) {
      if (p.image_id != g.image_id) continue;
      if (exact_iou(g.box, p.box) >= iou_threshold && p.score > best_score) {
        best_score = p.score;
        predicted = p.label.index();
      }
    }
    if (predicted == g.label.index()) {
      ++tp[predicted];
    } else {
      ++fn[g.label.index()];
      if (predicted < classes) ++fp[predicted];
    }
  }
  double ps = 0.0, rs = 0.0, fs = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (tp[c] + fn[c] == 0) continue;
    const double p = tp[c] + fp[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
    const double r = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    ps += p;
    rs += r;
    fs += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    ++n;
  }
  if (n > 0) {
    m.macro_precision = ps / static_cast<double>(n);
    m.macro_recall = rs / static_cast<double>(n);
    m.mean_class_f1 = fs / static_cast<double>(n);
  }
  const double pr = m.macro_precision + m.macro_recall;
  m.macro_f1 = pr > 0 ? 2 * m.macro_precision * m.macro_recall / pr : 0.0;
  return m;
}

// Straightforward per-cell mean, rounded half up.
Image pixelate(const Image& src, const PixelRect& r, int block) {
  Image out = src;
  for (int cy = r.y0; cy < r.y1; cy += block) {
    for (int cx = r.x0; cx < r.x1; cx += block) {
      const int ex = std::min(cx + block, r.x1), ey = std::min(cy + block, r.y1);
      unsigned long sr = 0, sg = 0, sb = 0, n = 0;
      for (int y = cy; y < ey; ++y) {
        for (int x = cx; x < ex; ++x) {
          const Rgb c = src.at(x, y);
          sr += c.r;
          sg += c.g;
          sb += c.b;
          ++n;
        }
      }
      const Rgb m{static_cast<std::uint8_t>((2 * sr + n) / (2 * n)), static_cast<std::uint8_t>((2 * sg + n) / (2 * n)),
                  static_cast<std::uint8_t>((2 * sb + n) / (2 * n))};
      for (int y = cy; y < ey; ++y) {
        for (int x = cx; x < ex; ++x) out.set(x, y, m);
      }
    }
  }
  return out;
}

}  // namespace wardpose::oracle
