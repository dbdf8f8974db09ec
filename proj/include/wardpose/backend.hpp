// SPDX-License-Identifier: Apache-2.0
#pragma once

// Inference backend contract shared by the pipeline and dataset tooling.
// Implementations: RemoteBackend (wire protocol, see protocol.hpp) and
// SyntheticBackend (scripted, see synthetic.hpp).

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wardpose/geometry.hpp"
#include "wardpose/labels.hpp"

namespace wardpose {

class Image;

inline constexpr int kProtocolVersion = 1;

struct Capabilities {
  int version = kProtocolVersion;
  std::vector<std::string> kinds;
  std::string name;
  friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

// The frame travels by file path; inline_ppm (base64 PPM) is the fallback
// for frames that exist only in memory. `pixels` is host-side only: a
// remote backend inlines it when frame_path is empty.
struct DetectRequest {
  std::string frame_path;
  std::optional<std::string> inline_ppm;
  std::int64_t frame_index = 0;
  Resolution resolution;
  std::shared_ptr<const Image> pixels;
  friend bool operator==(const DetectRequest&, const DetectRequest&) = default;
};

struct WindowFrame {
  std::int64_t frame_index = 0;
  std::string frame_path;
  std::optional<std::string> inline_ppm;
  std::vector<SubjectBox> boxes;
  std::shared_ptr<const Image> pixels;
  friend bool operator==(const WindowFrame&, const WindowFrame&) = default;
};

// Exactly fps consecutive frames ending at window_end_index.
struct RecognizeRequest {
  int fps = 0;
  std::int64_t window_end_index = 0;
  std::vector<WindowFrame> frames;
  friend bool operator==(const RecognizeRequest&, const RecognizeRequest&) = default;
};

struct ActionPrediction {
  int subject_index = 0;
  std::map<ActionLabel, double> scores;
  std::int64_t window_end_index = 0;
  friend bool operator==(const ActionPrediction&, const ActionPrediction&) = default;
};

class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual Capabilities capabilities() = 0;
  virtual std::vector<KeypointSet> detect(const DetectRequest& req) = 0;
  virtual std::vector<ActionPrediction> recognize(const RecognizeRequest& req) = 0;
};

// Throws BadWindow unless the request holds exactly fps frames with
// consecutive indices ending at window_end_index.
void validate_window(const RecognizeRequest& req);

// Throws BackendError if a response breaks the contract: scores outside
// [0,1], empty score maps, or subjects absent from the window's final frame.
void validate_predictions(const RecognizeRequest& req, const std::vector<ActionPrediction>& preds);

// Throws BackendError on keypoints outside the frame, confidences outside
// [0,1] or duplicate subject indices.
void validate_detections(const DetectRequest& req, const std::vector<KeypointSet>& subjects);

}  // namespace wardpose
