// SPDX-License-Identifier: Apache-2.0
#include "wardpose/labels.hpp"

#include <string>

#include "wardpose/error.hpp"

namespace wardpose {

namespace {

struct LabelEntry {
  std::string_view code;
  std::string_view name;
};

constexpr std::array<LabelEntry, ActionLabel::kCount> kLabels = {{
    {"A041", "sneeze/cough"},
    {"A042", "staggering"},
    {"A043", "falling down"},
    {"A044", "headache"},
    {"A045", "chest pain"},
    {"A046", "back pain"},
    {"A047", "neck pain"},
    {"A048", "nausea/vomiting"},
    {"A049", "fan self"},
    {"A103", "yawn"},
    {"A104", "stretch oneself"},
    {"A105", "blow nose"},
}};

}  // namespace

std::optional<ActionLabel> ActionLabel::try_from_code(std::string_view code) noexcept {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i].code == code) return ActionLabel(i);
  }
  return std::nullopt;
}

ActionLabel ActionLabel::from_code(std::string_view code) {
  if (auto label = try_from_code(code)) return *label;
  throw Error(ErrorCode::UnknownLabel, "action label '" + std::string(code) + "' is not one of the 12 classes");
}

ActionLabel ActionLabel::from_index(std::size_t index) {
  if (index >= kCount) {
    throw Error(ErrorCode::UnknownLabel, "label index " + std::to_string(index) + " out of range");
  }
  return ActionLabel(index);
}

const std::array<ActionLabel, ActionLabel::kCount>& ActionLabel::all() noexcept {
  static const std::array<ActionLabel, kCount> labels = [] {
    std::array<ActionLabel, kCount> out{};
    for (std::size_t i = 0; i < kCount; ++i) out[i] = ActionLabel(i);
    return out;
  }();
  return labels;
}

std::string_view ActionLabel::code() const noexcept { return kLabels[index_].code; }
std::string_view ActionLabel::name() const noexcept { return kLabels[index_].name; }

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NoValidKeypoints: return "NoValidKeypoints";
    case ErrorCode::InvalidResolution: return "InvalidResolution";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::WrongLength: return "WrongLength";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChannelClosed: return "ChannelClosed";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::BadScript: return "BadScript";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::SourceStalled: return "SourceStalled";
    case ErrorCode::BackpressureOverflow: return "BackpressureOverflow";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace wardpose
