// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wardpose/geometry.hpp"

namespace wardpose {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Interleaved 8-bit RGB raster, row-major, no padding.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] Resolution resolution() const noexcept { return {width_, height_}; }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] Rgb at(int x, int y) const noexcept {
    const std::uint8_t* p = data_.data() + offset(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    std::uint8_t* p = data_.data() + offset(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  // Bytes of row y from column x0 (inclusive) to x1 (exclusive).
  [[nodiscard]] std::span<const std::uint8_t> row(int y, int x0, int x1) const noexcept {
    return {data_.data() + offset(x0, y), static_cast<std::size_t>(x1 - x0) * 3};
  }
  [[nodiscard]] std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  [[nodiscard]] std::span<std::uint8_t> bytes() noexcept { return data_; }

  void fill_rect(const PixelRect& r, Rgb c) noexcept;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  [[nodiscard]] std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Binary PPM (P6, maxval 255). Throws Error(IoError) on malformed input.
Image read_ppm(const std::filesystem::path& path);
Image read_ppm(std::istream& in);
// Returns nullopt on clean end of stream (no bytes before the magic).
std::optional<Image> read_ppm_stream(std::istream& in);
void write_ppm(const std::filesystem::path& path, const Image& img);
void write_ppm(std::ostream& out, const Image& img);
std::string encode_ppm(const Image& img);
Image decode_ppm(std::string_view bytes);

// Area-average resize (each target pixel is the rounded mean of the source
// pixels it covers). Identity when the size already matches.
Image resize(const Image& src, Resolution to);

// Per-pixel inequality mask (row-major, width*height). Sizes must match.
std::vector<bool> diff_mask(const Image& a, const Image& b);

}  // namespace wardpose
