// SPDX-License-Identifier: Apache-2.0
#include <poll.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "wardpose/error.hpp"
#include "wardpose/pipeline.hpp"
#include "wardpose/text.hpp"

namespace wardpose::pipeline {

void LatencyStats::add(double ms) noexcept {
  ++count;
  mean_ms += (ms - mean_ms) / static_cast<double>(count);
  if (ms > max_ms) max_ms = ms;
}

nlohmann::ordered_json report_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["fps"] = r.fps;
  j["frames_in"] = r.frames_in;
  j["frames_out"] = r.frames_out;
  j["frames_detected"] = r.frames_detected;
  j["detection_drops"] = r.detection_drops;
  j["windows_recognized"] = r.windows_recognized;
  j["windows_dropped"] = r.windows_dropped;
  j["windows_failed"] = r.windows_failed;
  j["partial_window_frames"] = r.partial_window_frames;
  j["index_regressions"] = r.index_regressions;
  j["stale_overlay_intervals"] = r.stale_overlay_intervals;
  j["stale_frames"] = r.stale_frames;
  j["stopped_early"] = r.stopped_early;
  j["queue_capacity"] = r.queue_capacity;
  j["queue_max_occupancy"] = r.queue_max_occupancy;
  auto lat = [](const LatencyStats& s) {
    return nlohmann::ordered_json{{"count", s.count}, {"mean_ms", s.mean_ms}, {"max_ms", s.max_ms}};
  };
  j["latency"] = {{"detect", lat(r.detect_latency)}, {"recognize", lat(r.recognize_latency)}};
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

// --- prediction log ------------------------------------------------------------

void write_log_csv(std::ostream& out, std::span<const LogRow> rows) {
  out << "frame_index,subject_index,label,score,x1,y1,x2,y2\n";
  for (const LogRow& r : rows) {
    out << r.frame_index << ',' << r.subject_index << ',' << r.label.code() << ',' << text::format_double(r.score)
        << ',' << text::format_double(r.box.x1) << ',' << text::format_double(r.box.y1) << ','
        << text::format_double(r.box.x2) << ',' << text::format_double(r.box.y2) << '\n';
  }
}

std::vector<LogRow> read_log_csv(std::istream& in) {
  std::vector<LogRow> rows;
  std::string line;
  std::size_t n = 0;
  auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::MalformedRecord, "row " + std::to_string(n) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (line != "frame_index,subject_index,label,score,x1,y1,x2,y2") bad("unexpected header");
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != 8) bad("expected 8 fields");
    const auto frame = text::parse_int(f[0]);
    const auto subject = text::parse_int(f[1]);
    const auto label = ActionLabel::try_from_code(f[2]);
    const auto score = text::parse_double(f[3]);
    const auto x1 = text::parse_double(f[4]), y1 = text::parse_double(f[5]);
    const auto x2 = text::parse_double(f[6]), y2 = text::parse_double(f[7]);
    if (!frame || !subject || !label || !score || !x1 || !y1 || !x2 || !y2) bad("unparseable field");
    rows.push_back({*frame, static_cast<int>(*subject), *label, *score, {*x1, *y1, *x2, *y2}});
  }
  if (n == 0) bad("missing header");
  return rows;
}

// --- sources ---------------------------------------------------------------------

std::optional<FrameEnvelope> ClipSource::next() {
  if (pos_ >= clip_.frame_count()) return std::nullopt;
  const std::size_t i = pos_++;
  FrameEnvelope env;
  env.frame_index = static_cast<std::int64_t>(i);
  env.timestamp = static_cast<double>(i) / clip_.fps;
  env.image = std::make_shared<const Image>(dataset::load_frame(clip_, i));
  env.path = clip_.frames[i].path;
  return env;
}

SyntheticSource::SyntheticSource(std::int64_t frame_count, int fps, Resolution res, double pace)
    : count_(frame_count), fps_(fps), res_(res), pace_(pace) {
  if (fps <= 0 || res.width <= 0 || res.height <= 0) {
    throw Error(ErrorCode::BadConfig, "synthetic source needs positive fps and resolution");
  }
}

Image SyntheticSource::make_frame(std::int64_t index, Resolution res) {
  Image img(res.width, res.height);
  const int bar = static_cast<int>(index % res.width);
  for (int y = 0; y < res.height; ++y) {
    for (int x = 0; x < res.width; ++x) {
      const auto g = static_cast<std::uint8_t>((x * 255) / std::max(1, res.width - 1));
      const auto b = static_cast<std::uint8_t>((y * 255) / std::max(1, res.height - 1));
      img.set(x, y, x == bar ? Rgb{255, 255, 255} : Rgb{static_cast<std::uint8_t>(index & 0xff), g, b});
    }
  }
  return img;
}

std::optional<FrameEnvelope> SyntheticSource::next() {
  if (pos_ >= count_) return std::nullopt;
  if (pos_ == 0) start_ = std::chrono::steady_clock::now();
  if (pace_ > 0.0) {
    const auto due = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(static_cast<double>(pos_) / (fps_ * pace_)));
    std::this_thread::sleep_until(due);
  }
  FrameEnvelope env;
  env.frame_index = pos_;
  env.timestamp = static_cast<double>(pos_) / fps_;
  env.image = std::make_shared<const Image>(make_frame(pos_, res_));
  ++pos_;
  return env;
}

PpmStreamSource::PpmStreamSource(int fd, int fps, Resolution res, std::chrono::milliseconds stall_timeout)
    : fd_(fd), fps_(fps), res_(res), stall_(stall_timeout) {
  if (fps <= 0) throw Error(ErrorCode::BadConfig, "stream fps must be positive");
}

int PpmStreamSource::get_byte() {
  if (buf_pos_ < buf_.size()) return buf_[buf_pos_++];
  buf_.resize(1 << 16);
  for (;;) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(stall_.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, std::string("poll on frame stream failed: ") + std::strerror(errno));
    }
    if (rc == 0) {
      throw Error(ErrorCode::SourceStalled,
                  "no frame data for " + std::to_string(stall_.count()) + " ms after frame " + std::to_string(pos_));
    }
    const ssize_t n = ::read(fd_, buf_.data(), buf_.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::IoError, std::string("read on frame stream failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      buf_.clear();
      buf_pos_ = 0;
      return -1;
    }
    buf_.resize(static_cast<std::size_t>(n));
    buf_pos_ = 1;
    return buf_[0];
  }
}

std::optional<FrameEnvelope> PpmStreamSource::next() {
  // Header: P6 <w> <h> <maxval> then one whitespace byte.
  std::string tokens[4];
  int c = get_byte();
  while (c >= 0 && std::isspace(c)) c = get_byte();
  if (c < 0) return std::nullopt;
  for (int t = 0; t < 4; ++t) {
    while (c >= 0 && (std::isspace(c) || c == '#')) {
      if (c == '#') {
        while (c >= 0 && c != '\n') c = get_byte();
      }
      c = get_byte();
    }
    while (c >= 0 && !std::isspace(c)) {
      tokens[t].push_back(static_cast<char>(c));
      if (tokens[t].size() > 16) throw Error(ErrorCode::IoError, "oversized PPM header token");
      c = get_byte();
    }
    if (c < 0) throw Error(ErrorCode::IoError, "frame stream ended inside a PPM header");
  }
  const auto w = text::parse_int(tokens[1]);
  const auto h = text::parse_int(tokens[2]);
  if (tokens[0] != "P6" || !w || !h || tokens[3] != "255" || *w <= 0 || *h <= 0 || *w > 16384 || *h > 16384) {
    throw Error(ErrorCode::IoError, "unsupported frame header in stream");
  }
  if (*w != res_.width || *h != res_.height) {
    throw Error(ErrorCode::IoError, "stream frame is " + std::to_string(*w) + "x" + std::to_string(*h) +
                                        ", expected " + std::to_string(res_.width) + "x" + std::to_string(res_.height));
  }
  Image img(static_cast<int>(*w), static_cast<int>(*h));
  auto bytes = img.bytes();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const int b = get_byte();
    if (b < 0) throw Error(ErrorCode::IoError, "frame stream ended inside a frame");
    bytes[i] = static_cast<std::uint8_t>(b);
  }
  FrameEnvelope env;
  env.frame_index = pos_;
  env.timestamp = static_cast<double>(pos_) / fps_;
  env.image = std::make_shared<const Image>(img.resolution() == res_ ? std::move(img) : resize(img, res_));
  ++pos_;
  return env;
}

// --- sinks ---------------------------------------------------------------------------

DirectorySink::DirectorySink(std::filesystem::path dir, std::string pattern)
    : dir_(std::move(dir)), pattern_(std::move(pattern)) {
  std::filesystem::create_directories(dir_);
}

void DirectorySink::write(std::int64_t frame_index, const Image& frame) {
  write_ppm(dir_ / dataset::format_frame_name(pattern_, static_cast<std::size_t>(frame_index)), frame);
}

void CollectSink::write(std::int64_t frame_index, const Image& frame) {
  indices.push_back(frame_index);
  frames.push_back(frame);
}

void DigestSink::write(std::int64_t frame_index, const Image& frame) {
  indices.push_back(frame_index);
  for (const std::uint8_t b : frame.bytes()) {
    digest ^= b;
    digest *= 1099511628211ULL;
  }
}

void PpmStreamSink::write(std::int64_t, const Image& frame) {
  const std::string bytes = encode_ppm(frame);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, std::string("frame output failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace wardpose::pipeline
