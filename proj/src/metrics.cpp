// SPDX-License-Identifier: Apache-2.0
#include "wardpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "wardpose/error.hpp"
#include "wardpose/text.hpp"

namespace wardpose::metrics {

namespace fs = std::filesystem;

std::size_t ClassMatches::true_positives() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(ranked.begin(), ranked.end(), [](const RankedMatch& m) { return m.true_positive; }));
}

MatchTable match_detections(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds,
                            double iou_threshold) {
  MatchTable table;
  // (image, class) -> ground-truth indices
  std::unordered_map<std::string, std::array<std::vector<std::size_t>, ActionLabel::kCount>> gt_index;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt_index[gt[i].image_id][gt[i].label.index()].push_back(i);
    ++table[gt[i].label.index()].num_gt;
  }
  std::vector<bool> claimed(gt.size(), false);

  std::array<std::vector<std::size_t>, ActionLabel::kCount> by_class;
  for (std::size_t i = 0; i < preds.size(); ++i) by_class[preds[i].label.index()].push_back(i);

  std::vector<CornerBox> cand_boxes;
  std::vector<double> cand_iou;
  for (std::size_t c = 0; c < ActionLabel::kCount; ++c) {
    ClassMatches& cm = table[c];
    cm.label = ActionLabel::from_index(c);
    auto& order = by_class[c];
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    for (const std::size_t pi : order) {
      const PredictionItem& p = preds[pi];
      bool tp = false;
      if (auto it = gt_index.find(p.image_id); it != gt_index.end()) {
        const auto& cands = it->second[c];
        cand_boxes.clear();
        for (const std::size_t gi : cands) cand_boxes.push_back(gt[gi].box);
        cand_iou.resize(cand_boxes.size());
        iou_many(p.box, cand_boxes, cand_iou);
        std::size_t best = cands.size();
        double best_iou = -1.0;
        for (std::size_t k = 0; k < cands.size(); ++k) {
          if (claimed[cands[k]] || cand_iou[k] < iou_threshold) continue;
          if (cand_iou[k] > best_iou) {
            best_iou = cand_iou[k];
            best = k;
          }
        }
        if (best < cands.size()) {
          claimed[cands[best]] = true;
          tp = true;
        }
      }
      cm.ranked.push_back({p.score, tp, pi});
    }
  }
  return table;
}

double average_precision(const ClassMatches& matches) {
  if (matches.num_gt == 0) return 0.0;
  const std::size_t n = matches.ranked.size();
  std::vector<double> prec(n), rec(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (matches.ranked[i].true_positive) ++tp;
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / static_cast<double>(matches.num_gt);
  }
  for (std::size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rec[i] != prev_recall) {
      ap += (rec[i] - prev_recall) * prec[i];
      prev_recall = rec[i];
    }
  }
  return ap;
}

double mean_ap(const std::map<ActionLabel, double>& ap_per_class) {
  if (ap_per_class.empty()) throw Error(ErrorCode::NoGroundTruth, "no class has ground truth");
  double sum = 0.0;
  for (const auto& [_, ap] : ap_per_class) sum += ap;
  return sum / static_cast<double>(ap_per_class.size());
}

double precision(const ClassCounts& c) noexcept {
  return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const ClassCounts& c) noexcept {
  return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1(double p, double r) noexcept { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::size_t ConfusionMatrix::row_sum(std::size_t row) const noexcept {
  return std::accumulate(cells[row].begin(), cells[row].end(), std::size_t{0});
}

ClassificationResult classification_counts(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds,
                                           double iou_threshold) {
  std::unordered_map<std::string, std::vector<std::size_t>> preds_by_image;
  for (std::size_t i = 0; i < preds.size(); ++i) preds_by_image[preds[i].image_id].push_back(i);

  std::unordered_map<std::string, std::size_t> seen;
  ClassificationResult out;
  std::vector<CornerBox> boxes;
  std::vector<double> ious;
  for (const GroundTruthItem& g : gt) {
    if (++seen[g.image_id] > 1) {
      throw Error(ErrorCode::MalformedRecord, "image '" + g.image_id + "' has more than one ground truth");
    }
    const std::size_t row = g.label.index();
    std::size_t col = ConfusionMatrix::kUnmatched;
    if (auto it = preds_by_image.find(g.image_id); it != preds_by_image.end()) {
      boxes.clear();
      for (const std::size_t pi : it->second) boxes.push_back(preds[pi].box);
      ious.resize(boxes.size());
      iou_many(g.box, boxes, ious);
      double best_score = -1.0;
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const PredictionItem& p = preds[it->second[k]];
        if (ious[k] >= iou_threshold && p.score > best_score) {
          best_score = p.score;
          col = p.label.index();
        }
      }
    }
    ++out.confusion.cells[row][col];
    if (col == row) {
      ++out.counts[row].tp;
    } else {
      ++out.counts[row].fn;
      if (col != ConfusionMatrix::kUnmatched) ++out.counts[col].fp;
    }
  }
  return out;
}

MacroMetrics macro_from_rates(std::span<const double> precisions, std::span<const double> recalls) {
  MacroMetrics m;
  if (!precisions.empty()) {
    m.precision = std::accumulate(precisions.begin(), precisions.end(), 0.0) / static_cast<double>(precisions.size());
  }
  if (!recalls.empty()) {
    m.recall = std::accumulate(recalls.begin(), recalls.end(), 0.0) / static_cast<double>(recalls.size());
  }
  m.f1 = f1(m.precision, m.recall);
  return m;
}

MacroMetrics macro_metrics(std::span<const ClassCounts> counts) {
  std::vector<double> ps, rs;
  for (const ClassCounts& c : counts) {
    if (c.tp + c.fn == 0) continue;
    ps.push_back(precision(c));
    rs.push_back(recall(c));
  }
  return macro_from_rates(ps, rs);
}

EvalReport evaluate(std::span<const GroundTruthItem> gt, std::span<const PredictionItem> preds, double iou_threshold) {
  if (gt.empty()) throw Error(ErrorCode::NoGroundTruth, "ground truth is empty");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "iou threshold must lie in (0, 1]");
  }
  EvalReport r;
  r.iou_threshold = iou_threshold;
  const MatchTable table = match_detections(gt, preds, iou_threshold);
  for (const ClassMatches& cm : table) {
    r.gt_per_class[cm.label.index()] = cm.num_gt;
    if (cm.num_gt > 0) r.ap_per_class[cm.label] = average_precision(cm);
  }
  r.map = mean_ap(r.ap_per_class);
  const ClassificationResult cls = classification_counts(gt, preds, iou_threshold);
  r.counts = cls.counts;
  r.confusion = cls.confusion;
  const MacroMetrics macro = macro_metrics(r.counts);
  r.macro_precision = macro.precision;
  r.macro_recall = macro.recall;
  r.macro_f1 = macro.f1;
  return r;
}

// --- serialization ---------------------------------------------------------

nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["iou_threshold"] = r.iou_threshold;
  j["mAP"] = r.map;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  auto classes = nlohmann::ordered_json::array();
  for (const ActionLabel& l : ActionLabel::all()) {
    const ClassCounts& c = r.counts[l.index()];
    nlohmann::ordered_json row;
    row["label"] = std::string(l.code());
    row["name"] = std::string(l.name());
    row["num_gt"] = r.gt_per_class[l.index()];
    if (auto it = r.ap_per_class.find(l); it != r.ap_per_class.end()) {
      row["ap"] = it->second;
    } else {
      row["ap"] = nullptr;
    }
    const double p = precision(c), rc = recall(c);
    row["precision"] = p;
    row["recall"] = rc;
    row["f1"] = f1(p, rc);
    row["tp"] = c.tp;
    row["fp"] = c.fp;
    row["fn"] = c.fn;
    classes.push_back(std::move(row));
  }
  j["classes"] = std::move(classes);
  auto grid = nlohmann::ordered_json::array();
  for (const auto& row : r.confusion.cells) grid.push_back(row);
  j["confusion"] = {{"rows", "ground truth"}, {"columns", "predicted + unmatched"}, {"cells", std::move(grid)}};
  return j;
}

void write_per_class_csv(std::ostream& out, const EvalReport& r) {
  out << "label,name,num_gt,ap,precision,recall,f1,tp,fp,fn\n";
  for (const ActionLabel& l : ActionLabel::all()) {
    const ClassCounts& c = r.counts[l.index()];
    const double p = precision(c), rc = recall(c);
    const auto it = r.ap_per_class.find(l);
    out << l.code() << ',' << text::csv_field(l.name()) << ',' << r.gt_per_class[l.index()] << ','
        << (it != r.ap_per_class.end() ? text::format_double(it->second) : std::string()) << ','
        << text::format_double(p) << ',' << text::format_double(rc) << ',' << text::format_double(f1(p, rc)) << ','
        << c.tp << ',' << c.fp << ',' << c.fn << '\n';
  }
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& m) {
  out << "gt\\pred";
  for (const ActionLabel& l : ActionLabel::all()) out << ',' << l.code();
  out << ",unmatched\n";
  for (const ActionLabel& l : ActionLabel::all()) {
    out << l.code();
    for (const std::size_t v : m.cells[l.index()]) out << ',' << v;
    out << '\n';
  }
}

namespace {

Error row_error(std::size_t row, const std::string& why) {
  return Error(ErrorCode::MalformedRecord, "row " + std::to_string(row) + ": " + why);
}

CornerBox parse_box(const std::vector<std::string>& f, std::size_t first, std::size_t row) {
  double v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    const auto d = text::parse_double(f[first + i]);
    if (!d || !std::isfinite(*d)) throw row_error(row, "bad coordinate '" + f[first + i] + "'");
    v[i] = *d;
  }
  if (v[2] < v[0] || v[3] < v[1]) throw row_error(row, "box corners out of order");
  return {v[0], v[1], v[2], v[3]};
}

ActionLabel parse_label(const std::string& s, std::size_t row) {
  const auto l = ActionLabel::try_from_code(text::trim(s));
  if (!l) throw row_error(row, "unknown label '" + s + "'");
  return *l;
}

std::vector<std::string> read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw row_error(1, "missing header row");
  auto h = text::split_csv_line(line);
  for (auto& f : h) f = std::string(text::trim(f));
  return h;
}

}  // namespace

std::vector<GroundTruthItem> read_ground_truth_csv(std::istream& in) {
  const auto header = read_header(in);
  const std::vector<std::string> plain = {"image_id", "x1", "y1", "x2", "y2", "label"};
  const std::vector<std::string> scored = {"image_id", "x1", "y1", "x2", "y2", "label", "score"};
  const std::vector<std::string> annot = {"video_name", "x1", "y1", "x2", "y2", "label", "segment_index"};
  if (header != plain && header != scored && header != annot) {
    throw row_error(1, "expected header image_id,x1,y1,x2,y2,label");
  }
  std::vector<GroundTruthItem> out;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != header.size()) {
      throw row_error(row, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty()) throw row_error(row, "empty image id");
    out.push_back({f[0], parse_box(f, 1, row), parse_label(f[5], row)});
  }
  return out;
}

std::vector<PredictionItem> read_predictions_csv(std::istream& in) {
  const auto header = read_header(in);
  if (header != std::vector<std::string>{"image_id", "x1", "y1", "x2", "y2", "label", "score"}) {
    throw row_error(1, "expected header image_id,x1,y1,x2,y2,label,score");
  }
  std::vector<PredictionItem> out;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != 7) throw row_error(row, "expected 7 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw row_error(row, "empty image id");
    const auto score = text::parse_double(f[6]);
    if (!score || !(*score >= 0.0 && *score <= 1.0)) throw row_error(row, "score must lie in [0, 1]");
    out.push_back({f[0], parse_box(f, 1, row), parse_label(f[5], row), *score});
  }
  return out;
}

std::vector<GroundTruthItem> read_ground_truth_coco(const nlohmann::json& doc) {
  try {
    std::map<std::int64_t, ActionLabel> cats;
    for (const auto& c : doc.at("categories")) {
      const std::int64_t id = c.at("id").get<std::int64_t>();
      if (c.contains("code")) {
        cats[id] = ActionLabel::from_code(c.at("code").get<std::string>());
      } else {
        const auto name = c.at("name").get<std::string>();
        const auto& all = ActionLabel::all();
        const auto it = std::find_if(all.begin(), all.end(), [&](ActionLabel l) { return l.name() == name; });
        if (it == all.end()) throw Error(ErrorCode::UnknownLabel, "category '" + name + "'");
        cats[id] = *it;
      }
    }
    std::map<std::int64_t, std::string> images;
    for (const auto& im : doc.at("images")) images[im.at("id").get<std::int64_t>()] = im.at("file_name").get<std::string>();
    std::vector<GroundTruthItem> out;
    std::size_t n = 0;
    for (const auto& a : doc.at("annotations")) {
      ++n;
      const auto img = images.find(a.at("image_id").get<std::int64_t>());
      const auto cat = cats.find(a.at("category_id").get<std::int64_t>());
      if (img == images.end() || cat == cats.end()) {
        throw row_error(n, "annotation references unknown image or category");
      }
      const auto bbox = a.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4 || bbox[2] < 0 || bbox[3] < 0) throw row_error(n, "bbox must be [x, y, width, height]");
      out.push_back({img->second, {bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]}, cat->second});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("COCO document: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedRecord) throw;
    throw Error(ErrorCode::MalformedRecord, std::string("COCO document: ") + e.what());
  }
}

// --- training curves ----------------------------------------------------------

std::vector<CurveRecord> read_curve_records(std::istream& in) {
  const auto header = read_header(in);
  if (header != std::vector<std::string>{"series", "iteration", "value"}) {
    throw row_error(1, "expected header series,iteration,value");
  }
  std::vector<CurveRecord> out;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv_line(line);
    if (f.size() != 3) throw row_error(row, "expected 3 fields, got " + std::to_string(f.size()));
    const auto series = text::trim(f[0]);
    if (series.empty()) throw row_error(row, "empty series name");
    const auto it = text::parse_int(f[1]);
    if (!it || *it < 0) throw row_error(row, "bad iteration '" + f[1] + "'");
    const auto value = text::trim(f[2]);
    if (!text::parse_double(value)) throw row_error(row, "bad value '" + f[2] + "'");
    out.push_back({std::string(series), *it, std::string(value)});
  }
  return out;
}

namespace {

std::string series_file_name(const std::string& series) {
  std::string out;
  for (const char c : series) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '.' ? c : '_');
  }
  return out + ".csv";
}

bool is_ap_series(const std::string& s) { return s == "mAP" || s.rfind("AP/", 0) == 0; }

}  // namespace

CurveOutput emit_curves(std::span<const CurveRecord> records, const fs::path& out_dir) {
  if (records.empty()) throw Error(ErrorCode::MalformedRecord, "no curve records to emit");
  CurveOutput out;
  std::map<std::string, std::map<std::int64_t, std::string>> series;
  for (const CurveRecord& r : records) {
    if (r.series.empty()) throw Error(ErrorCode::MalformedRecord, "record with empty series name");
    if (r.iteration < 0) throw Error(ErrorCode::MalformedRecord, "record with negative iteration in " + r.series);
    auto& s = series[r.series];
    if (s.contains(r.iteration)) {
      out.warnings.push_back("duplicate iteration " + std::to_string(r.iteration) + " in series '" + r.series +
                             "'; keeping the later value");
    }
    s[r.iteration] = r.value;
  }
  std::map<std::string, std::string> file_owner;
  for (const auto& [name, _] : series) {
    const std::string file = series_file_name(name);
    if (auto [it, fresh] = file_owner.emplace(file, name); !fresh) {
      throw Error(ErrorCode::MalformedRecord, "series '" + name + "' and '" + it->second + "' map to the same file");
    }
  }

  fs::create_directories(out_dir);
  std::vector<std::string> ap_names;
  for (const auto& [name, points] : series) {
    const fs::path p = out_dir / series_file_name(name);
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    f << "iteration,value\n";
    for (const auto& [it, v] : points) f << it << ',' << v << '\n';
    out.files.push_back(p);
    if (is_ap_series(name)) ap_names.push_back(name);
  }
  if (!ap_names.empty()) {
    // mAP leads, then the per-class series in name order
    std::stable_partition(ap_names.begin(), ap_names.end(), [](const std::string& s) { return s == "mAP"; });
    std::set<std::int64_t> iterations;
    for (const auto& n : ap_names) {
      for (const auto& [it, _] : series[n]) iterations.insert(it);
    }
    const fs::path p = out_dir / "ap_map_curves.csv";
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    f << "iteration";
    for (const auto& n : ap_names) f << ',' << text::csv_field(n);
    f << '\n';
    for (const std::int64_t it : iterations) {
      f << it;
      for (const auto& n : ap_names) {
        const auto& pts = series[n];
        const auto v = pts.find(it);
        f << ',' << (v != pts.end() ? v->second : std::string());
      }
      f << '\n';
    }
    out.files.push_back(p);
  }
  return out;
}

std::vector<CurveRecord> curve_records(const EvalReport& r, std::int64_t iteration) {
  std::vector<CurveRecord> out;
  out.push_back({"mAP", iteration, text::format_double(r.map)});
  for (const auto& [label, ap] : r.ap_per_class) {
    out.push_back({"AP/" + std::string(label.code()), iteration, text::format_double(ap)});
  }
  return out;
}

}  // namespace wardpose::metrics
