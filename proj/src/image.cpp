// SPDX-License-Identifier: Apache-2.0
#include "wardpose/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "wardpose/error.hpp"

namespace wardpose {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidResolution, "negative image size");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

void Image::fill_rect(const PixelRect& r, Rgb c) noexcept {
  const int x0 = std::max(0, r.x0), x1 = std::min(width_, r.x1);
  const int y0 = std::max(0, r.y0), y1 = std::min(height_, r.y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
bool header_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch) == 0) {
      break;
    }
    ch = in.get();
  }
  while (ch != EOF && std::isspace(ch) == 0) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return !tok.empty();
}

int header_int(std::istream& in, const char* what) {
  std::string tok;
  if (!header_token(in, tok)) throw Error(ErrorCode::IoError, std::string("PPM header truncated at ") + what);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::IoError, std::string("PPM header has bad ") + what + " '" + tok + "'");
  }
}

Image read_body(std::istream& in) {
  const int w = header_int(in, "width");
  const int h = header_int(in, "height");
  const int maxval = header_int(in, "maxval");
  if (maxval != 255) throw Error(ErrorCode::IoError, "only maxval 255 PPM is supported");
  if (w == 0 || h == 0 || w > 16384 || h > 16384) throw Error(ErrorCode::IoError, "PPM size out of range");
  Image img(w, h);
  auto bytes = img.bytes();
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(ErrorCode::IoError, "PPM pixel data truncated");
  }
  return img;
}

}  // namespace

std::optional<Image> read_ppm_stream(std::istream& in) {
  std::string magic;
  if (!header_token(in, magic)) return std::nullopt;
  if (magic != "P6") throw Error(ErrorCode::IoError, "not a binary PPM (magic '" + magic + "')");
  return read_body(in);
}

Image read_ppm(std::istream& in) {
  auto img = read_ppm_stream(in);
  if (!img) throw Error(ErrorCode::IoError, "empty PPM input");
  return std::move(*img);
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open frame " + path.string());
  try {
    return read_ppm(in);
  } catch (const Error& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

void write_ppm(std::ostream& out, const Image& img) {
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  const auto bytes = img.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_ppm(out, img);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string encode_ppm(const Image& img) {
  std::ostringstream out(std::ios::binary);
  write_ppm(out, img);
  return std::move(out).str();
}

Image decode_ppm(std::string_view bytes) {
  std::istringstream in(std::string(bytes), std::ios::binary);
  return read_ppm(in);
}

Image resize(const Image& src, Resolution to) {
  if (to.width <= 0 || to.height <= 0) throw Error(ErrorCode::InvalidTarget, "resize target must be positive");
  if (src.resolution() == to) return src;
  Image out(to.width, to.height);
  const auto span_of = [](int i, int dst, int srcn) {
    // source range [lo, hi) covered by destination index i
    int lo = static_cast<int>(static_cast<long long>(i) * srcn / dst);
    int hi = static_cast<int>((static_cast<long long>(i + 1) * srcn + dst - 1) / dst);
    hi = std::max(hi, lo + 1);
    return std::pair{lo, std::min(hi, srcn)};
  };
  for (int y = 0; y < to.height; ++y) {
    const auto [sy0, sy1] = span_of(y, to.height, src.height());
    for (int x = 0; x < to.width; ++x) {
      const auto [sx0, sx1] = span_of(x, to.width, src.width());
      std::uint64_t r = 0, g = 0, b = 0;
      for (int sy = sy0; sy < sy1; ++sy) {
        for (int sx = sx0; sx < sx1; ++sx) {
          const Rgb c = src.at(sx, sy);
          r += c.r;
          g += c.g;
          b += c.b;
        }
      }
      const std::uint64_t n = static_cast<std::uint64_t>(sy1 - sy0) * static_cast<std::uint64_t>(sx1 - sx0);
      out.set(x, y,
              {static_cast<std::uint8_t>((r + n / 2) / n), static_cast<std::uint8_t>((g + n / 2) / n),
               static_cast<std::uint8_t>((b + n / 2) / n)});
    }
  }
  return out;
}

std::vector<bool> diff_mask(const Image& a, const Image& b) {
  if (a.resolution() != b.resolution()) throw Error(ErrorCode::InvalidResolution, "diff_mask size mismatch");
  std::vector<bool> mask(static_cast<std::size_t>(a.width()) * static_cast<std::size_t>(a.height()));
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(a.width()) + static_cast<std::size_t>(x)] =
          a.at(x, y) != b.at(x, y);
    }
  }
  return mask;
}

}  // namespace wardpose
