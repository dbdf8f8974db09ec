// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wardpose {

enum class ErrorCode {
  NoValidKeypoints,
  InvalidResolution,
  EmptyClip,
  InvalidTarget,
  WrongLength,
  BackendUnavailable,
  EmptyDataset,
  UnknownLabel,
  MalformedRecord,
  NoGroundTruth,
  VersionMismatch,
  ChannelClosed,
  BackendError,
  Timeout,
  BadWindow,
  BadScript,
  ProtocolError,
  ClipTooShort,
  SourceStalled,
  BackpressureOverflow,
  BadConfig,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers dispatch on code().
// detail() carries auxiliary data such as the raw payload of a rejected
// backend message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(std::move(detail)) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace wardpose
