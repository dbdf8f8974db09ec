// SPDX-License-Identifier: Apache-2.0
#pragma once

// Wire format between the host and inference backends.
//
// Every message is a 4-byte big-endian length followed by that many bytes of
// UTF-8 JSON:
//
//   {"version": 1, "request_id": 7, "kind": "detect", "payload": {...}}
//
// Requests and responses share a kind; a backend answers any request with
// kind "error" when it cannot serve it. docs/protocol.md lists every field.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/backend.hpp"
#include "wardpose/transport.hpp"

namespace wardpose::protocol {

inline constexpr std::uint32_t kMaxMessageBytes = 64u << 20;

enum class Kind { Capabilities, Detect, Recognize, Error };

std::string_view kind_name(Kind k) noexcept;
std::optional<Kind> parse_kind(std::string_view s) noexcept;

struct Message {
  int version = kProtocolVersion;
  std::uint64_t request_id = 0;
  Kind kind = Kind::Error;
  nlohmann::json payload = nlohmann::json::object();
  friend bool operator==(const Message&, const Message&) = default;
};

// Error codes carried in kind=error payloads.
namespace codes {
inline constexpr std::string_view kVersionMismatch = "version_mismatch";
inline constexpr std::string_view kBadWindow = "bad_window";
inline constexpr std::string_view kProtocolError = "protocol_error";
inline constexpr std::string_view kBadRequest = "bad_request";
inline constexpr std::string_view kBackendError = "backend_error";
}  // namespace codes

struct ErrorPayload {
  std::string code;
  std::string message;
  friend bool operator==(const ErrorPayload&, const ErrorPayload&) = default;
};

std::string encode_body(const Message& m);
// Throws ProtocolError (raw body kept in Error::detail()).
Message decode_body(std::string_view body);
// Length prefix + body.
std::string encode_frame(const Message& m);

// --- typed payloads --------------------------------------------------------
// *_from_json throw ProtocolError naming the offending field.

nlohmann::json to_json(const Capabilities& c);
Capabilities capabilities_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DetectRequest& r);
DetectRequest detect_request_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KeypointSet& k);
KeypointSet keypoint_set_from_json(const nlohmann::json& j);
nlohmann::json detect_response_to_json(const std::vector<KeypointSet>& subjects);
std::vector<KeypointSet> detect_response_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RecognizeRequest& r);
RecognizeRequest recognize_request_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ActionPrediction& p);
ActionPrediction prediction_from_json(const nlohmann::json& j);
nlohmann::json recognize_response_to_json(const std::vector<ActionPrediction>& preds);
std::vector<ActionPrediction> recognize_response_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ErrorPayload& e);
ErrorPayload error_from_json(const nlohmann::json& j);

std::string base64_encode(std::string_view bytes);
// Throws ProtocolError on invalid input.
std::string base64_decode(std::string_view text);

// --- framing over a channel --------------------------------------------------

void write_message(ByteChannel& ch, const Message& m);
// Reads one length-prefixed body without decoding it. Throws Timeout,
// ChannelClosed, or ProtocolError when the length exceeds the limit (the
// stream cannot be resynchronized after that).
std::string read_frame(ByteChannel& ch, std::chrono::steady_clock::time_point deadline);
// Throws Timeout when the deadline passes, ChannelClosed on end of stream,
// ProtocolError on an oversized length or an undecodable body.
Message read_message(ByteChannel& ch, std::chrono::steady_clock::time_point deadline);

}  // namespace wardpose::protocol
