// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "wardpose/error.hpp"
#include "wardpose/image.hpp"
#include "wardpose/protocol.hpp"
#include "wardpose/remote.hpp"

namespace wardpose {

using nlohmann::json;
namespace proto = protocol;

void validate_window(const RecognizeRequest& req) {
  if (req.fps <= 0) throw Error(ErrorCode::BadWindow, "fps must be positive");
  if (req.frames.size() != static_cast<std::size_t>(req.fps)) {
    throw Error(ErrorCode::BadWindow, "window holds " + std::to_string(req.frames.size()) + " frames, expected " +
                                          std::to_string(req.fps));
  }
  const std::int64_t first = req.window_end_index - req.fps + 1;
  for (std::size_t i = 0; i < req.frames.size(); ++i) {
    if (req.frames[i].frame_index != first + static_cast<std::int64_t>(i)) {
      throw Error(ErrorCode::BadWindow, "frame indices are not consecutive up to window_end_index " +
                                            std::to_string(req.window_end_index));
    }
  }
}

void validate_predictions(const RecognizeRequest& req, const std::vector<ActionPrediction>& preds) {
  std::set<int> present;
  if (!req.frames.empty()) {
    for (const SubjectBox& b : req.frames.back().boxes) present.insert(b.subject_index);
  }
  std::set<int> seen;
  for (const ActionPrediction& p : preds) {
    if (p.window_end_index != req.window_end_index) {
      throw Error(ErrorCode::BackendError, "prediction for window " + std::to_string(p.window_end_index) +
                                               " answers window " + std::to_string(req.window_end_index));
    }
    if (p.scores.empty()) throw Error(ErrorCode::BackendError, "prediction without scores");
    for (const auto& [label, s] : p.scores) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw Error(ErrorCode::BackendError, "score for " + std::string(label.code()) + " outside [0,1]");
      }
    }
    if (!present.contains(p.subject_index)) {
      throw Error(ErrorCode::BackendError,
                  "subject " + std::to_string(p.subject_index) + " is absent from the final frame");
    }
    if (!seen.insert(p.subject_index).second) {
      throw Error(ErrorCode::BackendError, "duplicate prediction for subject " + std::to_string(p.subject_index));
    }
  }
}

void validate_detections(const DetectRequest& req, const std::vector<KeypointSet>& subjects) {
  const double w = req.resolution.width;
  const double h = req.resolution.height;
  std::set<int> seen;
  for (const KeypointSet& k : subjects) {
    if (k.subject_index < 0 || !seen.insert(k.subject_index).second) {
      throw Error(ErrorCode::BackendError, "invalid or duplicate subject_index " + std::to_string(k.subject_index));
    }
    if (!k.valid_mask.empty() && k.valid_mask.size() != k.points.size()) {
      throw Error(ErrorCode::BackendError, "valid_mask length differs from point count");
    }
    for (std::size_t i = 0; i < k.points.size(); ++i) {
      const Keypoint& p = k.points[i];
      if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
        throw Error(ErrorCode::BackendError, "keypoint confidence outside [0,1]");
      }
      if (!k.is_valid(i)) continue;
      if (!(p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h)) {
        throw Error(ErrorCode::BackendError, "keypoint outside the frame bounds");
      }
    }
  }
}

// --- RemoteBackend ---------------------------------------------------------

RemoteBackend::RemoteBackend(std::unique_ptr<ByteChannel> channel, RemoteOptions opts)
    : opts_(opts), channel_(std::move(channel)) {}

RemoteBackend::~RemoteBackend() { close(); }

void RemoteBackend::attach_process(Subprocess process) { process_.emplace(std::move(process)); }

void RemoteBackend::close() {
  std::lock_guard lock(mu_);
  if (channel_) channel_->close();
  channel_.reset();
  process_.reset();
}

json RemoteBackend::call(proto::Kind kind, json payload, std::chrono::milliseconds timeout) {
  std::lock_guard lock(mu_);
  if (!channel_ || broken_) throw Error(ErrorCode::ChannelClosed, "backend connection is closed");
  const std::uint64_t id = next_id_++;
  try {
    proto::write_message(*channel_, {opts_.version, id, kind, std::move(payload)});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ChannelClosed) broken_ = true;
    throw;
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    std::string body;
    try {
      body = proto::read_frame(*channel_, deadline);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Timeout) abandoned_.insert(id);
      if (e.code() == ErrorCode::ChannelClosed || e.code() == ErrorCode::ProtocolError) broken_ = true;
      if (e.code() == ErrorCode::ProtocolError) throw Error(ErrorCode::BackendError, e.what());
      throw;
    }
    proto::Message reply;
    try {
      reply = proto::decode_body(body);
    } catch (const Error& e) {
      // Only one request is live, so an undecodable body answers it.
      throw Error(ErrorCode::BackendError, "malformed response body", body);
    }
    if (reply.request_id != id) {
      if (abandoned_.erase(reply.request_id) > 0) continue;
      abandoned_.insert(id);
      throw Error(ErrorCode::BackendError, "response for unknown request_id " + std::to_string(reply.request_id),
                  body);
    }
    if (reply.kind == proto::Kind::Error) {
      proto::ErrorPayload err;
      try {
        err = proto::error_from_json(reply.payload);
      } catch (const Error&) {
        throw Error(ErrorCode::BackendError, "malformed error payload", body);
      }
      if (err.code == proto::codes::kVersionMismatch) throw Error(ErrorCode::VersionMismatch, err.message, body);
      if (err.code == proto::codes::kBadWindow) throw Error(ErrorCode::BadWindow, err.message, body);
      throw Error(ErrorCode::BackendError, err.code + ": " + err.message, body);
    }
    if (reply.version != opts_.version) {
      throw Error(ErrorCode::VersionMismatch, "backend speaks version " + std::to_string(reply.version) +
                                                  ", host speaks " + std::to_string(opts_.version));
    }
    if (reply.kind != kind) {
      throw Error(ErrorCode::BackendError,
                  "response kind " + std::string(proto::kind_name(reply.kind)) + " does not match the request", body);
    }
    return std::move(reply.payload);
  }
}

Capabilities RemoteBackend::handshake() {
  Capabilities mine{opts_.version, {"detect", "recognize"}, "wardpose-host"};
  json payload;
  try {
    payload = call(proto::Kind::Capabilities, proto::to_json(mine), opts_.handshake_timeout);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Timeout) {
      throw Error(ErrorCode::ChannelClosed, "backend silent past the handshake timeout");
    }
    throw;
  }
  Capabilities caps;
  try {
    caps = proto::capabilities_from_json(payload);
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendError, e.what(), payload.dump());
  }
  if (caps.version != opts_.version) {
    throw Error(ErrorCode::VersionMismatch, "backend speaks version " + std::to_string(caps.version) +
                                                ", host speaks " + std::to_string(opts_.version));
  }
  caps_ = caps;
  return caps;
}

Capabilities RemoteBackend::capabilities() {
  if (!caps_) return handshake();
  return *caps_;
}

namespace {

template <typename Frame>
void inline_pixels(Frame& f, const std::string& path) {
  if (path.empty() && !f.inline_ppm && f.pixels) f.inline_ppm = proto::base64_encode(encode_ppm(*f.pixels));
}

}  // namespace

std::vector<KeypointSet> RemoteBackend::detect(const DetectRequest& req) {
  if (!caps_) handshake();
  DetectRequest out = req;
  inline_pixels(out, out.frame_path);
  const json payload = call(proto::Kind::Detect, proto::to_json(out), opts_.timeout);
  std::vector<KeypointSet> subjects;
  try {
    subjects = proto::detect_response_from_json(payload);
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendError, e.what(), payload.dump());
  }
  validate_detections(req, subjects);
  return subjects;
}

std::vector<ActionPrediction> RemoteBackend::recognize(const RecognizeRequest& req) {
  validate_window(req);
  if (!caps_) handshake();
  RecognizeRequest out = req;
  for (WindowFrame& f : out.frames) inline_pixels(f, f.frame_path);
  const json payload = call(proto::Kind::Recognize, proto::to_json(out), opts_.timeout);
  std::vector<ActionPrediction> preds;
  try {
    preds = proto::recognize_response_from_json(payload);
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendError, e.what(), payload.dump());
  }
  validate_predictions(req, preds);
  return preds;
}

std::unique_ptr<RemoteBackend> spawn_backend(const std::vector<std::string>& argv, RemoteOptions opts) {
  Subprocess proc = Subprocess::spawn(argv);
  auto backend = std::make_unique<RemoteBackend>(proc.take_channel(), opts);
  backend->attach_process(std::move(proc));
  try {
    backend->handshake();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ChannelClosed || e.code() == ErrorCode::BackendError) {
      throw Error(ErrorCode::BackendUnavailable, "backend '" + argv.front() + "' did not complete the handshake (" +
                                                     e.what() + ")");
    }
    throw;
  }
  return backend;
}

// --- serving ---------------------------------------------------------------

namespace {

void reply(ByteChannel& ch, int version, std::uint64_t id, proto::Kind kind, json payload) {
  proto::write_message(ch, {version, id, kind, std::move(payload)});
}

void reply_error(ByteChannel& ch, int version, std::uint64_t id, std::string_view code, const std::string& msg) {
  reply(ch, version, id, proto::Kind::Error, proto::to_json(proto::ErrorPayload{std::string(code), msg}));
}

std::shared_ptr<const Image> decode_inline(const std::optional<std::string>& b64) {
  if (!b64) return nullptr;
  return std::make_shared<const Image>(decode_ppm(proto::base64_decode(*b64)));
}

}  // namespace

namespace {

void serve_loop(InferenceBackend& backend, ByteChannel& channel, int version) {
  std::uint64_t last_id = 0;
  bool first = true;
  const auto forever = std::chrono::steady_clock::time_point::max();
  for (;;) {
    proto::Message req;
    try {
      req = proto::read_message(channel, forever);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ChannelClosed) return;
      if (e.code() == ErrorCode::ProtocolError) {
        try {
          reply_error(channel, version, 0, proto::codes::kProtocolError, e.what());
        } catch (const Error&) {
        }
        return;
      }
      throw;
    }
    try {
      if (!first && req.request_id <= last_id) {
        reply_error(channel, version, req.request_id, proto::codes::kProtocolError,
                    "request_id " + std::to_string(req.request_id) + " does not increase");
        return;
      }
      first = false;
      last_id = req.request_id;
      if (req.version != version) {
        reply_error(channel, version, req.request_id, proto::codes::kVersionMismatch,
                    "backend speaks version " + std::to_string(version));
        continue;
      }
      switch (req.kind) {
        case proto::Kind::Capabilities: {
          Capabilities caps = backend.capabilities();
          caps.version = version;
          reply(channel, version, req.request_id, req.kind, proto::to_json(caps));
          break;
        }
        case proto::Kind::Detect: {
          DetectRequest d = proto::detect_request_from_json(req.payload);
          d.pixels = decode_inline(d.inline_ppm);
          reply(channel, version, req.request_id, req.kind, proto::detect_response_to_json(backend.detect(d)));
          break;
        }
        case proto::Kind::Recognize: {
          RecognizeRequest r = proto::recognize_request_from_json(req.payload);
          validate_window(r);
          for (WindowFrame& f : r.frames) f.pixels = decode_inline(f.inline_ppm);
          reply(channel, version, req.request_id, req.kind,
                proto::recognize_response_to_json(backend.recognize(r)));
          break;
        }
        case proto::Kind::Error:
          reply_error(channel, version, req.request_id, proto::codes::kBadRequest, "error is not a request kind");
          break;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ChannelClosed) return;
      std::string_view code = proto::codes::kBackendError;
      if (e.code() == ErrorCode::ProtocolError || e.code() == ErrorCode::IoError) code = proto::codes::kBadRequest;
      if (e.code() == ErrorCode::BadWindow) code = proto::codes::kBadWindow;
      reply_error(channel, version, req.request_id, code, e.what());
    } catch (const std::exception& e) {
      reply_error(channel, version, req.request_id, proto::codes::kBackendError, e.what());
    }
  }
}

}  // namespace

void serve(InferenceBackend& backend, ByteChannel& channel, int version) {
  try {
    serve_loop(backend, channel, version);
  } catch (const Error& e) {
    // The peer went away while we were answering.
    if (e.code() != ErrorCode::ChannelClosed) throw;
  }
}

}  // namespace wardpose
