// SPDX-License-Identifier: Apache-2.0
#include "wardpose/protocol.hpp"

#include <array>
#include <cmath>

#include "wardpose/error.hpp"

namespace wardpose::protocol {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxRetainedRaw = 64 * 1024;

[[noreturn]] void bad(const std::string& what, std::string raw = {}) {
  throw Error(ErrorCode::ProtocolError, what, std::move(raw));
}

const json& field(const json& j, const char* name, const char* ctx) {
  if (!j.is_object()) bad(std::string(ctx) + " must be an object");
  const auto it = j.find(name);
  if (it == j.end()) bad(std::string(ctx) + "." + name + " is missing");
  return *it;
}

std::int64_t as_int(const json& v, const std::string& name) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  bad(name + " must be an integer");
}

double as_number(const json& v, const std::string& name) {
  if (!v.is_number()) bad(name + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(name + " must be finite");
  return d;
}

std::string as_string(const json& v, const std::string& name) {
  if (!v.is_string()) bad(name + " must be a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& name) {
  if (!v.is_array()) bad(name + " must be an array");
  return v;
}

int as_int32(const json& v, const std::string& name) {
  const std::int64_t i = as_int(v, name);
  if (i < -(1LL << 31) || i >= (1LL << 31)) bad(name + " out of range");
  return static_cast<int>(i);
}

ActionLabel as_label(const std::string& code, const std::string& name) {
  const auto l = ActionLabel::try_from_code(code);
  if (!l) bad(name + " has unknown label '" + code + "'");
  return *l;
}

}  // namespace

std::string_view kind_name(Kind k) noexcept {
  switch (k) {
    case Kind::Capabilities: return "capabilities";
    case Kind::Detect: return "detect";
    case Kind::Recognize: return "recognize";
    case Kind::Error: return "error";
  }
  return "error";
}

std::optional<Kind> parse_kind(std::string_view s) noexcept {
  for (Kind k : {Kind::Capabilities, Kind::Detect, Kind::Recognize, Kind::Error}) {
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

std::string encode_body(const Message& m) {
  json j;
  j["version"] = m.version;
  j["request_id"] = m.request_id;
  j["kind"] = std::string(kind_name(m.kind));
  j["payload"] = m.payload;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Message decode_body(std::string_view body) {
  std::string raw(body.substr(0, kMaxRetainedRaw));
  try {
    const json j = json::parse(body);
    Message m;
    m.version = as_int32(field(j, "version", "message"), "message.version");
    const json& id = field(j, "request_id", "message");
    if (!id.is_number_unsigned() && !(id.is_number_integer() && id.get<std::int64_t>() >= 0)) {
      bad("message.request_id must be a non-negative integer");
    }
    m.request_id = id.get<std::uint64_t>();
    const auto kind = parse_kind(as_string(field(j, "kind", "message"), "message.kind"));
    if (!kind) bad("message.kind is not one of capabilities, detect, recognize, error");
    m.kind = *kind;
    m.payload = field(j, "payload", "message");
    if (!m.payload.is_object()) bad("message.payload must be an object");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("undecodable message body: ") + e.what(), std::move(raw));
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolError, e.what(), std::move(raw));
  }
}

std::string encode_frame(const Message& m) {
  const std::string body = encode_body(m);
  if (body.size() > kMaxMessageBytes) {
    throw Error(ErrorCode::ProtocolError, "message of " + std::to_string(body.size()) + " bytes exceeds the limit");
  }
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += body;
  return out;
}

// --- typed payloads --------------------------------------------------------

json to_json(const Capabilities& c) { return {{"version", c.version}, {"kinds", c.kinds}, {"name", c.name}}; }

Capabilities capabilities_from_json(const json& j) {
  Capabilities c;
  c.version = as_int32(field(j, "version", "capabilities"), "capabilities.version");
  c.kinds.clear();
  for (const auto& k : as_array(field(j, "kinds", "capabilities"), "capabilities.kinds")) {
    c.kinds.push_back(as_string(k, "capabilities.kinds[]"));
  }
  c.name = j.contains("name") ? as_string(j.at("name"), "capabilities.name") : std::string();
  return c;
}

json to_json(const DetectRequest& r) {
  json frame = {{"path", r.frame_path}};
  if (r.inline_ppm) frame["inline_ppm"] = *r.inline_ppm;
  return {{"frame", std::move(frame)},
          {"frame_index", r.frame_index},
          {"width", r.resolution.width},
          {"height", r.resolution.height}};
}

DetectRequest detect_request_from_json(const json& j) {
  DetectRequest r;
  const json& frame = field(j, "frame", "detect");
  r.frame_path = as_string(field(frame, "path", "detect.frame"), "detect.frame.path");
  if (frame.contains("inline_ppm")) r.inline_ppm = as_string(frame.at("inline_ppm"), "detect.frame.inline_ppm");
  r.frame_index = as_int(field(j, "frame_index", "detect"), "detect.frame_index");
  r.resolution.width = as_int32(field(j, "width", "detect"), "detect.width");
  r.resolution.height = as_int32(field(j, "height", "detect"), "detect.height");
  return r;
}

json to_json(const KeypointSet& k) {
  json points = json::array();
  const bool with_mask = !k.valid_mask.empty();
  for (std::size_t i = 0; i < k.points.size(); ++i) {
    const Keypoint& p = k.points[i];
    json row = {p.part_id, p.x, p.y, p.confidence};
    if (with_mask) row.push_back(i < k.valid_mask.size() && k.valid_mask[i] ? 1 : 0);
    points.push_back(std::move(row));
  }
  return {{"subject_index", k.subject_index}, {"points", std::move(points)}};
}

KeypointSet keypoint_set_from_json(const json& j) {
  KeypointSet k;
  k.subject_index = as_int32(field(j, "subject_index", "subject"), "subject.subject_index");
  bool any_mask = false;
  std::vector<bool> mask;
  for (const auto& row : as_array(field(j, "points", "subject"), "subject.points")) {
    if (!row.is_array() || (row.size() != 4 && row.size() != 5)) {
      bad("subject.points[] must be [part_id, x, y, confidence(, valid)]");
    }
    Keypoint p;
    p.part_id = as_int32(row[0], "subject.points[].part_id");
    p.x = as_number(row[1], "subject.points[].x");
    p.y = as_number(row[2], "subject.points[].y");
    p.confidence = as_number(row[3], "subject.points[].confidence");
    k.points.push_back(p);
    if (row.size() == 5) {
      any_mask = true;
      mask.push_back(as_int(row[4], "subject.points[].valid") != 0);
    } else {
      mask.push_back(true);
    }
  }
  if (any_mask) k.valid_mask = std::move(mask);
  return k;
}

json detect_response_to_json(const std::vector<KeypointSet>& subjects) {
  json arr = json::array();
  for (const auto& s : subjects) arr.push_back(to_json(s));
  return {{"subjects", std::move(arr)}};
}

std::vector<KeypointSet> detect_response_from_json(const json& j) {
  std::vector<KeypointSet> out;
  for (const auto& s : as_array(field(j, "subjects", "detect_response"), "detect_response.subjects")) {
    out.push_back(keypoint_set_from_json(s));
  }
  return out;
}

json to_json(const RecognizeRequest& r) {
  json frames = json::array();
  for (const WindowFrame& f : r.frames) {
    json boxes = json::array();
    for (const SubjectBox& b : f.boxes) boxes.push_back({b.subject_index, b.x, b.y, b.l, b.w});
    json jf = {{"frame_index", f.frame_index}, {"path", f.frame_path}, {"boxes", std::move(boxes)}};
    if (f.inline_ppm) jf["inline_ppm"] = *f.inline_ppm;
    frames.push_back(std::move(jf));
  }
  return {{"fps", r.fps}, {"window_end_index", r.window_end_index}, {"frames", std::move(frames)}};
}

RecognizeRequest recognize_request_from_json(const json& j) {
  RecognizeRequest r;
  r.fps = as_int32(field(j, "fps", "recognize"), "recognize.fps");
  r.window_end_index = as_int(field(j, "window_end_index", "recognize"), "recognize.window_end_index");
  for (const auto& jf : as_array(field(j, "frames", "recognize"), "recognize.frames")) {
    WindowFrame f;
    f.frame_index = as_int(field(jf, "frame_index", "recognize.frames[]"), "recognize.frames[].frame_index");
    f.frame_path = as_string(field(jf, "path", "recognize.frames[]"), "recognize.frames[].path");
    if (jf.contains("inline_ppm")) f.inline_ppm = as_string(jf.at("inline_ppm"), "recognize.frames[].inline_ppm");
    for (const auto& b : as_array(field(jf, "boxes", "recognize.frames[]"), "recognize.frames[].boxes")) {
      if (!b.is_array() || b.size() != 5) bad("recognize.frames[].boxes[] must be [subject_index, x, y, l, w]");
      f.boxes.push_back({as_number(b[1], "box.x"), as_number(b[2], "box.y"), as_number(b[3], "box.l"),
                         as_number(b[4], "box.w"), as_int32(b[0], "box.subject_index")});
    }
    r.frames.push_back(std::move(f));
  }
  return r;
}

json to_json(const ActionPrediction& p) {
  json scores = json::object();
  for (const auto& [label, s] : p.scores) scores[std::string(label.code())] = s;
  return {{"subject_index", p.subject_index}, {"window_end_index", p.window_end_index}, {"scores", std::move(scores)}};
}

ActionPrediction prediction_from_json(const json& j) {
  ActionPrediction p;
  p.subject_index = as_int32(field(j, "subject_index", "prediction"), "prediction.subject_index");
  p.window_end_index = as_int(field(j, "window_end_index", "prediction"), "prediction.window_end_index");
  const json& scores = field(j, "scores", "prediction");
  if (!scores.is_object()) bad("prediction.scores must be an object");
  for (const auto& [code, v] : scores.items()) {
    p.scores[as_label(code, "prediction.scores")] = as_number(v, "prediction.scores." + code);
  }
  return p;
}

json recognize_response_to_json(const std::vector<ActionPrediction>& preds) {
  json arr = json::array();
  for (const auto& p : preds) arr.push_back(to_json(p));
  return {{"predictions", std::move(arr)}};
}

std::vector<ActionPrediction> recognize_response_from_json(const json& j) {
  std::vector<ActionPrediction> out;
  for (const auto& p : as_array(field(j, "predictions", "recognize_response"), "recognize_response.predictions")) {
    out.push_back(prediction_from_json(p));
  }
  return out;
}

json to_json(const ErrorPayload& e) { return {{"code", e.code}, {"message", e.message}}; }

ErrorPayload error_from_json(const json& j) {
  return {as_string(field(j, "code", "error"), "error.code"),
          j.contains("message") ? as_string(j.at("message"), "error.message") : std::string()};
}

// --- base64 --------------------------------------------------------------------

namespace {
constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                            (static_cast<std::uint8_t>(bytes[i + 1]) << 8) | static_cast<std::uint8_t>(bytes[i + 2]);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (std::size_t i = 0; i < kAlphabet.size(); ++i) t[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
    return t;
  }();
  if (text.size() % 4 != 0) bad("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        if (pad > 0) bad("base64 padding in the middle");
        v[k] = table[static_cast<unsigned char>(c)];
        if (v[k] < 0) bad("invalid base64 character");
      }
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(v[0]) << 18) | (static_cast<std::uint32_t>(v[1]) << 12) |
                            (static_cast<std::uint32_t>(v[2]) << 6) | static_cast<std::uint32_t>(v[3]);
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(n & 0xff));
  }
  return out;
}

// --- framing over a channel --------------------------------------------------

namespace {

// Returns false on end of stream before the first byte.
bool read_exact(ByteChannel& ch, std::byte* dst, std::size_t n, std::chrono::steady_clock::time_point deadline) {
  std::size_t got = 0;
  while (got < n) {
    const std::size_t r = ch.read_some({dst + got, n - got}, deadline);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::ChannelClosed, "stream ended inside a message");
    }
    got += r;
  }
  return true;
}

}  // namespace

void write_message(ByteChannel& ch, const Message& m) {
  const std::string frame = encode_frame(m);
  ch.write_all(std::as_bytes(std::span(frame.data(), frame.size())));
}

std::string read_frame(ByteChannel& ch, std::chrono::steady_clock::time_point deadline) {
  std::array<std::byte, 4> prefix{};
  if (!read_exact(ch, prefix.data(), prefix.size(), deadline)) {
    throw Error(ErrorCode::ChannelClosed, "peer closed the channel");
  }
  const std::uint32_t n = (std::to_integer<std::uint32_t>(prefix[0]) << 24) |
                          (std::to_integer<std::uint32_t>(prefix[1]) << 16) |
                          (std::to_integer<std::uint32_t>(prefix[2]) << 8) | std::to_integer<std::uint32_t>(prefix[3]);
  if (n > kMaxMessageBytes) {
    throw Error(ErrorCode::ProtocolError, "message length " + std::to_string(n) + " exceeds the limit");
  }
  std::string body(n, '\0');
  if (n > 0 && !read_exact(ch, reinterpret_cast<std::byte*>(body.data()), n, deadline)) {
    throw Error(ErrorCode::ChannelClosed, "stream ended inside a message");
  }
  return body;
}

Message read_message(ByteChannel& ch, std::chrono::steady_clock::time_point deadline) {
  return decode_body(read_frame(ch, deadline));
}

}  // namespace wardpose::protocol
