// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <string_view>
#include <vector>

#include "wardpose/pipeline.hpp"
#include "wardpose/privacy.hpp"
#include "wardpose/text.hpp"

namespace wardpose::pipeline {

namespace {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kThickness = 2;
constexpr int kPad = 2;

struct Glyph {
  char c;
  std::array<std::string_view, kGlyphH> rows;
};

// 5x7 bitmap font covering label banners and the watermark.
constexpr std::array<Glyph, 20> kFont{{
    {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
    {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
    {'3', {"####.", "....#", "....#", ".###.", "....#", "....#", "####."}},
    {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
    {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
    {'6', {".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."}},
    {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
    {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
    {'9', {".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."}},
    {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
    {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
    {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
    {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
    {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
    {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
    {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
    {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
    {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"}},
    {' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
}};

const Glyph* glyph_for(char c) {
  for (const Glyph& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

constexpr std::array<Rgb, 6> kPalette{{
    {230, 57, 70}, {42, 157, 143}, {233, 196, 106}, {69, 123, 157}, {244, 162, 97}, {131, 56, 236}}};

Rgb subject_colour(int subject_index) {
  return kPalette[static_cast<std::size_t>(subject_index < 0 ? 0 : subject_index) % kPalette.size()];
}

int text_width(std::string_view s, int scale) {
  return s.empty() ? 0 : static_cast<int>(s.size()) * (kGlyphW + 1) * scale - scale;
}

// Unknown characters render as a solid cell.
void draw_text(Image& img, int x, int y, std::string_view s, Rgb fg, int scale) {
  for (char c : s) {
    const Glyph* g = glyph_for(c);
    for (int gy = 0; gy < kGlyphH; ++gy) {
      for (int gx = 0; gx < kGlyphW; ++gx) {
        if (g != nullptr && g->rows[static_cast<std::size_t>(gy)][static_cast<std::size_t>(gx)] != '#') continue;
        img.fill_rect({x + gx * scale, y + gy * scale, x + (gx + 1) * scale, y + (gy + 1) * scale}, fg);
      }
    }
    x += (kGlyphW + 1) * scale;
  }
}

void draw_outline(Image& img, const PixelRect& r, Rgb c) {
  const int t = std::min({kThickness, r.width(), r.height()});
  img.fill_rect({r.x0, r.y0, r.x1, r.y0 + t}, c);
  img.fill_rect({r.x0, r.y1 - t, r.x1, r.y1}, c);
  img.fill_rect({r.x0, r.y0, r.x0 + t, r.y1}, c);
  img.fill_rect({r.x1 - t, r.y0, r.x1, r.y1}, c);
}

std::vector<std::pair<ActionLabel, double>> top_labels(const ActionPrediction& p, const RunConfig& cfg) {
  std::vector<std::pair<ActionLabel, double>> out;
  for (const auto& [label, s] : p.scores) {
    if (s >= cfg.score_display_threshold) out.emplace_back(label, s);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > static_cast<std::size_t>(std::max(cfg.top_k, 0))) out.resize(static_cast<std::size_t>(cfg.top_k));
  return out;
}

}  // namespace

Image render_overlay(const Image& frame, std::span<const Detection> detections, OverlayState& overlay,
                     const RunConfig& cfg) {
  Image out = frame;
  const int scale = frame.height() >= 240 ? 2 : 1;
  const int line_h = kGlyphH * scale + 2 * kPad;

  std::vector<Detection> drawable;
  for (const Detection& d : detections) {
    if (d.box.l * d.box.w >= cfg.min_box_area) drawable.push_back(d);
  }
  const std::vector<int> match = overlay.associate(drawable);

  for (std::size_t i = 0; i < drawable.size(); ++i) {
    const Detection& d = drawable[i];
    const PixelRect r = to_pixels(xylw_to_corners(d.box), out.width(), out.height());
    if (r.empty()) continue;
    const Rgb colour = subject_colour(d.box.subject_index);
    draw_outline(out, r, colour);
    if (match[i] < 0) continue;

    const auto labels = top_labels(overlay.entries()[static_cast<std::size_t>(match[i])].prediction, cfg);
    const int n = static_cast<int>(labels.size());
    // Banners stack above the box, or inside its top edge when there is no room.
    int y = r.y0 - n * line_h;
    if (y < 0) y = r.y0 + kThickness;
    for (const auto& [label, score] : labels) {
      const std::string caption = std::string(label.code()) + " " + text::format_fixed(score, 2);
      const int w = text_width(caption, scale) + 2 * kPad;
      out.fill_rect({r.x0, y, r.x0 + w, y + line_h}, colour);
      draw_text(out, r.x0 + kPad, y + kPad, caption, {0, 0, 0}, scale);
      y += line_h;
    }
  }

  if (cfg.watermark) {
    constexpr std::string_view kMark = "WARDPOSE";
    const int w = text_width(kMark, 1);
    draw_text(out, out.width() - w - 4, out.height() - kGlyphH - 4, kMark, {255, 255, 255}, 1);
  }
  return out;
}

Image apply_privacy(const Image& frame, std::span<const Detection> detections, const RunConfig& cfg) {
  if (!cfg.blur_faces || detections.empty()) return frame;
  std::vector<privacy::FaceRegion> faces;
  for (const Detection& d : detections) {
    if (auto f = privacy::face_region(d.keypoints, cfg.face_margin, frame.resolution(), cfg.min_confidence)) {
      faces.push_back(*f);
    }
  }
  if (faces.empty()) return frame;
  return privacy::blur(frame, faces, cfg.blur_block);
}

}  // namespace wardpose::pipeline
