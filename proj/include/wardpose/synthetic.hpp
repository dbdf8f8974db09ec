// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic scripted backend. Script schema (JSON):
//
//   {
//     "name": "fall",
//     "detect": {
//       "delay_ms": 0,
//       "paths":  [{"match": "clip7", "subjects": [SUBJECT...]}],
//       "frames": {"12": [SUBJECT...]},
//       "ranges": [{"from": 0, "to": 74, "subjects": [SUBJECT...]}]
//     },
//     "recognize": {
//       "delay_ms": 0,
//       "windows": {"49": [PREDICTION...]},
//       "ranges":  [{"from": 50, "to": 74, "predictions": [PREDICTION...]}]
//     }
//   }
//
//   SUBJECT    = {"subject_index": 0, "box": [x1, y1, x2, y2], "confidence": 0.9}
//              | {"subject_index": 0, "points": [[part_id, x, y, conf], ...]}
//   PREDICTION = {"subject_index": 0 | "*", "scores": {"A043": 0.97}}
//
// Detection lookup order is paths (substring of the frame path), then the
// exact frame index, then the first covering range. Recognition looks up
// the exact window_end_index, then the first covering range. Anything
// unscripted yields an empty list. Predictions are emitted only for
// subjects present in the window's final frame; "*" expands to all of them.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/backend.hpp"

namespace wardpose {

struct ScriptedPrediction {
  int subject_index = -1;  // -1 means every subject in the final frame
  std::map<ActionLabel, double> scores;
};

struct SyntheticScript {
  std::string name;
  std::chrono::milliseconds detect_delay{0};
  std::chrono::milliseconds recognize_delay{0};

  struct PathRule {
    std::string match;
    std::vector<KeypointSet> subjects;
  };
  struct FrameRange {
    std::int64_t from = 0;
    std::int64_t to = 0;
    std::vector<KeypointSet> subjects;
  };
  struct WindowRange {
    std::int64_t from = 0;
    std::int64_t to = 0;
    std::vector<ScriptedPrediction> predictions;
  };

  std::vector<PathRule> paths;
  std::map<std::int64_t, std::vector<KeypointSet>> frames;
  std::vector<FrameRange> frame_ranges;
  std::map<std::int64_t, std::vector<ScriptedPrediction>> windows;
  std::vector<WindowRange> window_ranges;
};

// Throws BadScript naming the offending element.
SyntheticScript parse_script(const nlohmann::json& j);
SyntheticScript load_script(const std::filesystem::path& path);

// Figure with 25 body and 10 facial keypoints whose extreme points coincide
// with the box corners. Facial points span the top 13% of the box height
// and the central 16% of its width.
KeypointSet synthetic_figure(const CornerBox& box, double confidence, int subject_index);

class SyntheticBackend final : public InferenceBackend {
 public:
  explicit SyntheticBackend(SyntheticScript script);

  Capabilities capabilities() override;
  std::vector<KeypointSet> detect(const DetectRequest& req) override;
  std::vector<ActionPrediction> recognize(const RecognizeRequest& req) override;

  [[nodiscard]] const SyntheticScript& script() const noexcept { return script_; }

 private:
  SyntheticScript script_;
};

}  // namespace wardpose
