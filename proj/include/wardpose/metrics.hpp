// SPDX-License-Identifier: Apache-2.0
#pragma once

// Detection and classification evaluation at a spatial IoU threshold:
// greedy matching, all-point-interpolated AP, mAP, per-class counts,
// macro precision/recall/F1 and confusion matrices.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wardpose/geometry.hpp"
#include "wardpose/labels.hpp"

namespace wardpose::metrics {

inline constexpr double kDefaultIouThreshold = 0.5;

struct GroundTruthItem {
  std::string image_id;
  CornerBox box;
  ActionLabel label;
};

struct PredictionItem {
  std::string image_id;
  CornerBox box;
  ActionLabel label;
  double score = 0.0;
};

struct RankedMatch {
  double score = 0.0;
  bool true_positive = false;
  std::size_t prediction_index = 0;  // position in the caller's input
};

// One class: its predictions in ranked order plus the ground-truth count.
struct ClassMatches {
  ActionLabel label;
  std::vector<RankedMatch> ranked;
  std::size_t num_gt = 0;

  [[nodiscard]] std::size_t true_positives() const noexcept;
  [[nodiscard]] std::size_t false_positives() const noexcept { return ranked.size() - true_positives(); }
  [[nodiscard]] std::size_t false_negatives() const noexcept { return num_gt - true_positives(); }
};

using MatchTable = std::array<ClassMatches, ActionLabel::kCount>;

// Per class, predictions are ranked by descending score (stable on input
// order) and each one claims the highest-IoU unmatched ground truth of the
// same image and class when that IoU reaches the threshold.
MatchTable match_detections(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds,
                            double iou_threshold = kDefaultIouThreshold);

// Area under the precision envelope (all-point interpolation). 0 when the
// class has no ground truth.
double average_precision(const ClassMatches& matches);

// Unweighted mean. Throws NoGroundTruth on an empty map.
double mean_ap(const std::map<ActionLabel, double>& ap_per_class);

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// 0 when the denominator is 0.
double precision(const ClassCounts& c) noexcept;
double recall(const ClassCounts& c) noexcept;
double f1(double p, double r) noexcept;

// Rows are ground-truth classes; columns are predicted classes followed by
// one "unmatched" column.
struct ConfusionMatrix {
  static constexpr std::size_t kUnmatched = ActionLabel::kCount;
  std::array<std::array<std::size_t, ActionLabel::kCount + 1>, ActionLabel::kCount> cells{};

  [[nodiscard]] std::size_t row_sum(std::size_t row) const noexcept;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ClassificationResult {
  std::array<ClassCounts, ActionLabel::kCount> counts{};
  ConfusionMatrix confusion;
};

// One ground truth per image: the top-scoring prediction whose box reaches
// the IoU threshold names the predicted class. Images without one go to the
// unmatched column (FN only). Throws MalformedRecord when an image carries
// more than one ground truth.
ClassificationResult classification_counts(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds,
                                           double iou_threshold = kDefaultIouThreshold);

struct MacroMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Means of the per-class rates over classes with ground truth (tp + fn > 0);
// f1 is the harmonic mean of the two macro averages, not a mean of
// per-class F1 values.
MacroMetrics macro_metrics(std::span<const ClassCounts> counts);
MacroMetrics macro_from_rates(std::span<const double> precisions, std::span<const double> recalls);

struct EvalReport {
  double iou_threshold = kDefaultIouThreshold;
  std::map<ActionLabel, double> ap_per_class;  // classes with ground truth only
  double map = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassCounts, ActionLabel::kCount> counts{};
  std::array<std::size_t, ActionLabel::kCount> gt_per_class{};
  ConfusionMatrix confusion;
};

// Throws NoGroundTruth if gt is empty.
EvalReport evaluate(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds,
                    double iou_threshold = kDefaultIouThreshold);

// --- serialization ---------------------------------------------------------

nlohmann::ordered_json report_json(const EvalReport& r);
// label,name,num_gt,ap,precision,recall,f1,tp,fp,fn
void write_per_class_csv(std::ostream& out, const EvalReport& r);
// Header row "gt\pred,<codes...>,unmatched"; one row per ground-truth class.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& m);

// CSV interchange: image_id,x1,y1,x2,y2,label[,score]. The ground-truth
// reader also accepts the annotation CSV (video_name,...,segment_index).
// Errors are MalformedRecord with the 1-based row number.
std::vector<GroundTruthItem> read_ground_truth_csv(std::istream& in);
std::vector<PredictionItem> read_predictions_csv(std::istream& in);
// images/annotations/categories document; image_id is the file_name.
std::vector<GroundTruthItem> read_ground_truth_coco(const nlohmann::json& doc);

// --- training curves ----------------------------------------------------------

struct CurveRecord {
  std::string series;
  std::int64_t iteration = 0;
  std::string value;  // original text, written back unmodified
};

struct CurveOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

// series,iteration,value rows. MalformedRecord on bad rows.
std::vector<CurveRecord> read_curve_records(std::istream& in);

// One <series>.csv (iteration,value) per series with iterations ascending,
// plus ap_map_curves.csv joining "mAP" and every "AP/<code>" series on
// iteration. Duplicate iterations keep the later record and add a warning.
// Throws MalformedRecord on empty input.
CurveOutput emit_curves(std::span<const CurveRecord> records, const std::filesystem::path& out_dir);

// "mAP" and "AP/<code>" records for one evaluation.
std::vector<CurveRecord> curve_records(const EvalReport& r, std::int64_t iteration);

}  // namespace wardpose::metrics
