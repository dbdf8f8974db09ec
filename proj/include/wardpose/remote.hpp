// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wardpose/backend.hpp"
#include "wardpose/protocol.hpp"
#include "wardpose/transport.hpp"

namespace wardpose {

struct RemoteOptions {
  std::chrono::milliseconds timeout{5000};
  std::chrono::milliseconds handshake_timeout{5000};
  int version = kProtocolVersion;
};

// Host side of the wire protocol. Calls are serialized on one connection;
// a response that arrives after its caller timed out is discarded.
class RemoteBackend final : public InferenceBackend {
 public:
  explicit RemoteBackend(std::unique_ptr<ByteChannel> channel, RemoteOptions opts = {});
  ~RemoteBackend() override;

  // Throws VersionMismatch or ChannelClosed (including on silence past the
  // handshake timeout).
  Capabilities handshake();

  Capabilities capabilities() override;
  std::vector<KeypointSet> detect(const DetectRequest& req) override;
  std::vector<ActionPrediction> recognize(const RecognizeRequest& req) override;

  // Keeps a child process alive for as long as the backend.
  void attach_process(Subprocess process);
  void close();

 private:
  // Sends one request and returns the matching response payload.
  nlohmann::json call(protocol::Kind kind, nlohmann::json payload, std::chrono::milliseconds timeout);

  RemoteOptions opts_;
  std::optional<Subprocess> process_;
  std::unique_ptr<ByteChannel> channel_;
  std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::set<std::uint64_t> abandoned_;
  std::optional<Capabilities> caps_;
  bool broken_ = false;
};

// Spawns argv as a child speaking the protocol on stdin/stdout and completes
// the handshake. Throws BackendUnavailable when the child cannot be started
// or does not answer.
std::unique_ptr<RemoteBackend> spawn_backend(const std::vector<std::string>& argv, RemoteOptions opts = {});

// Backend side: answers requests from `channel` with `backend` until the
// peer closes. request_id must increase strictly; a violation or an
// unreadable frame is answered with protocol_error and ends the session.
void serve(InferenceBackend& backend, ByteChannel& channel, int version = kProtocolVersion);

}  // namespace wardpose
