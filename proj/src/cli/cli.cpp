// SPDX-License-Identifier: Apache-2.0
#include "wardpose/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "wardpose/dataset_prep.hpp"
#include "wardpose/metrics.hpp"
#include "wardpose/pipeline.hpp"
#include "wardpose/privacy.hpp"
#include "wardpose/remote.hpp"
#include "wardpose/synthetic.hpp"
#include "wardpose/text.hpp"
#include "wardpose/transport.hpp"

namespace wardpose::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::BadScript:
      return kExitBadConfig;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::BackendError:
    case ErrorCode::VersionMismatch:
    case ErrorCode::ChannelClosed:
    case ErrorCode::Timeout:
    case ErrorCode::ProtocolError:
    case ErrorCode::BadWindow:
    case ErrorCode::BackpressureOverflow:
      return kExitBackend;
    case ErrorCode::SourceStalled:
      return kExitStall;
    default:
      return kExitBadData;
  }
}

std::unique_ptr<InferenceBackend> open_backend(const std::string& endpoint, const config::Config& cfg) {
  constexpr std::string_view kSynthetic = "synthetic:";
  constexpr std::string_view kExec = "exec:";
  if (endpoint.starts_with(kSynthetic)) {
    return std::make_unique<SyntheticBackend>(load_script(endpoint.substr(kSynthetic.size())));
  }
  if (endpoint.starts_with(kExec)) {
    const auto argv = split_command(endpoint.substr(kExec.size()));
    if (argv.empty()) throw Error(ErrorCode::BadConfig, "exec endpoint without a command");
    RemoteOptions opts;
    opts.timeout = std::chrono::milliseconds(cfg.get_int("timeout_ms"));
    opts.handshake_timeout = std::chrono::milliseconds(cfg.get_int("handshake_timeout_ms"));
    return spawn_backend(argv, opts);
  }
  throw Error(ErrorCode::BadConfig, "backend endpoint '" + endpoint + "' must start with synthetic: or exec:");
}

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

struct Backends {
  std::unique_ptr<InferenceBackend> detector_owned;
  std::unique_ptr<InferenceBackend> recognizer_owned;
  InferenceBackend* detector = nullptr;
  InferenceBackend* recognizer = nullptr;
};

Backends open_backends(const config::Config& cfg, bool need_recognizer) {
  Backends b;
  const std::string det = cfg.get_string("detector");
  if (det.empty()) throw Error(ErrorCode::BadConfig, "backend.detector (--detector) is required");
  b.detector_owned = open_backend(det, cfg);
  b.detector = b.detector_owned.get();
  if (!need_recognizer) return b;
  std::string rec = cfg.get_string("recognizer");
  if (rec.empty()) rec = det;
  // A scripted backend is stateless and can serve both roles; a process
  // gets its own connection per role.
  if (rec == det && det.starts_with("synthetic:")) {
    b.recognizer = b.detector;
  } else {
    b.recognizer_owned = open_backend(rec, cfg);
    b.recognizer = b.recognizer_owned.get();
  }
  return b;
}

// Error text without the leading "Code: " so it can be re-wrapped.
std::string bare(const Error& e) {
  const std::string_view w = e.what();
  const std::size_t skip = to_string(e.code()).size() + 2;
  return std::string(w.size() >= skip ? w.substr(skip) : w);
}

Error with_context(const Error& e, const std::string& where) {
  return Error(e.code(), where + ": " + bare(e), e.detail());
}

fs::path manifest_path(const std::string& p) {
  if (p.empty()) throw Error(ErrorCode::BadConfig, "no clip given");
  fs::path path(p);
  if (fs::is_directory(path)) path /= "manifest.txt";
  return path;
}

dataset::ClipManifest read_clip(const fs::path& path) {
  try {
    return dataset::read_manifest(path);
  } catch (const Error& e) {
    throw with_context(e, path.string());
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

// --- subcommands -------------------------------------------------------------------

int cmd_prepare(const config::Config& cfg, std::ostream& out) {
  const fs::path input(cfg.get_string("input_dir"));
  if (input.empty()) throw Error(ErrorCode::BadConfig, "dataset.input_dir (--input-dir) is required");
  if (!fs::is_directory(input)) throw Error(ErrorCode::IoError, "input directory " + input.string() + " not found");
  std::vector<fs::path> manifests;
  if (fs::exists(input / "manifest.txt")) manifests.push_back(input / "manifest.txt");
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.txt")) manifests.push_back(entry.path() / "manifest.txt");
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw Error(ErrorCode::EmptyDataset, "no clip manifests under " + input.string());

  const fs::path prepared(cfg.get_string("prepared_dir"));
  fs::create_directories(prepared / "keyframes");
  std::vector<dataset::ClipManifest> processed;
  std::size_t segment_count = 0;
  for (const fs::path& m : manifests) {
    const dataset::ClipManifest clip = read_clip(m);
    const dataset::PreparedClip p = dataset::preprocess_clip(clip);
    const dataset::ClipManifest stored = dataset::write_clip(p.processed, prepared / "clips" / clip.clip_id);
    for (const dataset::ClipManifest& seg : dataset::segment_clip(stored)) {
      const dataset::ClipManifest seg_stored = dataset::write_clip(seg, prepared / "segments" / seg.clip_id);
      write_ppm(prepared / "keyframes" / (seg.clip_id + ".ppm"),
                dataset::load_frame(seg_stored, dataset::keyframe_index(seg_stored)));
      ++segment_count;
    }
    processed.push_back(stored);
  }

  Backends b = open_backends(cfg, false);
  const dataset::AnnotationResult ann =
      dataset::build_annotations(processed, *b.detector, {cfg.get_double("min_confidence"), cfg.get_double("margin")});
  {
    auto f = open_out(prepared / "annotations.csv");
    dataset::write_annotation_csv(f, ann.records);
  }
  {
    auto f = open_out(prepared / "skip_report.csv");
    dataset::write_skip_report(f, ann.skipped);
  }
  const dataset::CocoDocuments coco = dataset::export_coco(
      ann.records, {cfg.get_double("train_fraction"), static_cast<std::uint64_t>(cfg.get_int("seed"))});
  open_out(prepared / "coco_train.json") << dataset::to_text(coco.train);
  open_out(prepared / "coco_val.json") << dataset::to_text(coco.val);
  const std::string_view train_sections[] = {"dataset", "train"};
  open_out(prepared / "train_config.txt") << "# Pass-through settings for an external trainer.\n"
                                          << cfg.to_text(train_sections);

  out << "clips " << processed.size() << "\n"
      << "segments " << segment_count << "\n"
      << "annotations " << ann.records.size() << "\n"
      << "skipped " << ann.skipped.size() << "\n"
      << "train " << coco.train["annotations"].size() << "\n"
      << "val " << coco.val["annotations"].size() << "\n";
  return kExitOk;
}

int cmd_eval(const config::Config& cfg, std::ostream& out) {
  const fs::path gt_path(cfg.get_string("gt"));
  const fs::path pred_path(cfg.get_string("pred"));
  if (gt_path.empty() || pred_path.empty()) throw Error(ErrorCode::BadConfig, "eval needs --gt and --pred");
  std::vector<metrics::GroundTruthItem> gt;
  std::ifstream gin(gt_path);
  if (!gin) throw Error(ErrorCode::IoError, "cannot read " + gt_path.string());
  try {
    if (gt_path.extension() == ".json") {
      gt = metrics::read_ground_truth_coco(nlohmann::json::parse(gin));
    } else {
      gt = metrics::read_ground_truth_csv(gin);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, gt_path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw with_context(e, gt_path.string());
  }
  std::ifstream pin(pred_path);
  if (!pin) throw Error(ErrorCode::IoError, "cannot read " + pred_path.string());
  std::vector<metrics::PredictionItem> preds;
  try {
    preds = metrics::read_predictions_csv(pin);
  } catch (const Error& e) {
    throw with_context(e, pred_path.string());
  }

  const metrics::EvalReport r = metrics::evaluate(gt, preds, cfg.get_double("iou_threshold"));
  const fs::path dir(cfg.get_string("eval_dir"));
  fs::create_directories(dir);
  open_out(dir / "report.json") << metrics::report_json(r).dump(2) << "\n";
  {
    auto f = open_out(dir / "per_class.csv");
    metrics::write_per_class_csv(f, r);
  }
  {
    auto f = open_out(dir / "confusion.csv");
    metrics::write_confusion_csv(f, r.confusion);
  }
  out << "mAP " << text::format_fixed(r.map, 4) << "\n"
      << "macro-precision " << text::format_fixed(r.macro_precision, 4) << "\n"
      << "macro-recall " << text::format_fixed(r.macro_recall, 4) << "\n"
      << "macro-F1 " << text::format_fixed(r.macro_f1, 4) << "\n";
  return kExitOk;
}

int cmd_run(const config::Config& cfg, std::ostream& out) {
  pipeline::RunConfig rc = config::run_config(cfg);
  const fs::path dir(cfg.get_string("output_dir"));
  fs::create_directories(dir);
  std::unique_ptr<pipeline::FrameSink> sink;
  if (cfg.get_bool("write_frames")) {
    sink = std::make_unique<pipeline::DirectorySink>(dir / "frames");
  } else {
    sink = std::make_unique<pipeline::DigestSink>();
  }

  g_stop = false;
  rc.stop = &g_stop;
  auto previous = std::signal(SIGINT, on_interrupt);
  struct Restore {
    decltype(previous) handler;
    ~Restore() { std::signal(SIGINT, handler); }
  } restore{previous};

  Backends b = open_backends(cfg, true);
  pipeline::RunResult result;
  if (rc.mode == pipeline::Mode::Offline) {
    const dataset::ClipManifest clip = read_clip(manifest_path(cfg.get_string("clip")));
    result = pipeline::run_offline(clip, *b.detector, *b.recognizer, rc, *sink);
  } else {
    std::unique_ptr<pipeline::FrameSource> source;
    const std::string& kind = cfg.raw("source");
    if (kind == "clip") {
      source = std::make_unique<pipeline::ClipSource>(read_clip(manifest_path(cfg.get_string("clip"))));
    } else if (kind == "synthetic") {
      source = std::make_unique<pipeline::SyntheticSource>(cfg.get_int("synthetic_frames"), rc.fps, rc.resolution,
                                                           cfg.get_double("synthetic_pace"));
    } else {
      source = std::make_unique<pipeline::PpmStreamSource>(0, rc.fps, rc.resolution, rc.stall_timeout);
    }
    result = pipeline::run_online(*source, *b.detector, *b.recognizer, rc, *sink);
  }

  {
    auto f = open_out(dir / "predictions.csv");
    pipeline::write_log_csv(f, result.log);
  }
  open_out(dir / "run_report.json") << pipeline::report_json(result.report).dump(2) << "\n";
  const auto& r = result.report;
  out << "mode " << r.mode << "\n"
      << "frames " << r.frames_out << " @" << r.fps << "fps\n"
      << "windows " << r.windows_recognized << "\n"
      << "dropped " << r.detection_drops << " detections, " << r.windows_dropped << " windows\n"
      << "predictions " << result.log.size() << "\n";
  if (r.stopped_early) out << "interrupted\n";
  return kExitOk;
}

int cmd_blur(const config::Config& cfg, std::ostream& out) {
  pipeline::RunConfig rc = config::run_config(cfg);
  const dataset::ClipManifest clip = read_clip(manifest_path(cfg.get_string("blur_input")));
  Backends b = open_backends(cfg, false);
  const fs::path dir(cfg.get_string("blur_output"));
  fs::create_directories(dir);
  dataset::ClipManifest written = clip;
  std::size_t faces = 0;
  for (std::size_t i = 0; i < clip.frame_count(); ++i) {
    const Image img = dataset::load_frame(clip, i);
    std::vector<KeypointSet> subjects;
    try {
      subjects = b.detector->detect({clip.frames[i].path, std::nullopt, static_cast<std::int64_t>(i), clip.resolution,
                                     nullptr});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ChannelClosed || e.code() == ErrorCode::Timeout) {
        throw Error(ErrorCode::BackendUnavailable, bare(e));
      }
      throw;
    }
    std::vector<privacy::FaceRegion> regions;
    for (const KeypointSet& k : subjects) {
      if (auto f = privacy::face_region(k, rc.face_margin, clip.resolution, rc.min_confidence)) regions.push_back(*f);
    }
    faces += regions.size();
    const fs::path name = dir / dataset::format_frame_name(dataset::kDefaultFramePattern, i);
    write_ppm(name, privacy::blur(img, regions, rc.blur_block));
    written.frames[i].path = name.string();
  }
  dataset::write_manifest_file(dir / "manifest.txt", written);
  out << "frames " << clip.frame_count() << "\n"
      << "faces " << faces << "\n";
  return kExitOk;
}

int cmd_curves(const config::Config& cfg, std::ostream& out, std::ostream& err) {
  const fs::path records(cfg.get_string("records"));
  if (records.empty()) throw Error(ErrorCode::BadConfig, "curves needs --records");
  std::ifstream in(records);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + records.string());
  const auto recs = metrics::read_curve_records(in);
  const metrics::CurveOutput o = metrics::emit_curves(recs, cfg.get_string("curves_dir"));
  for (const auto& w : o.warnings) err << "warning: " << w << "\n";
  for (const auto& f : o.files) out << f.string() << "\n";
  return kExitOk;
}

int cmd_synthetic_backend(const std::string& script, int version) {
  SyntheticBackend backend(load_script(script));
  FdChannel channel(0, 1, /*owns=*/false);
  serve(backend, channel, version);
  return kExitOk;
}

// Declares one option per selected key; values land in `raw`. A selector is
// a whole section ("run") or a single key ("run.margin").
void add_config_options(CLI::App& app, std::initializer_list<std::string_view> selectors,
                        std::map<std::string, std::string>& raw) {
  for (const config::KeySpec& k : config::schema()) {
    const std::string dotted = std::string(k.section) + "." + std::string(k.key);
    const bool wanted = std::any_of(selectors.begin(), selectors.end(),
                                    [&](std::string_view s) { return s == k.section || s == dotted; });
    if (!wanted) continue;
    std::string help = std::string(k.help) + " [" + std::string(k.section) + "." + std::string(k.key) + "]";
    std::string& slot = raw[std::string(k.key)];
    if (k.type == config::ValueType::Bool) {
      app.add_flag(config::flag_name(k), slot, help)->default_str(std::string(k.default_value));
    } else {
      auto* opt = app.add_option(config::flag_name(k), slot, help)->default_str(std::string(k.default_value));
      switch (k.type) {
        case config::ValueType::Int: opt->type_name("INT"); break;
        case config::ValueType::Double: opt->type_name("NUM"); break;
        case config::ValueType::IntList: opt->type_name("INT,..."); break;
        case config::ValueType::Choice: opt->type_name(std::string(k.choices)); break;
        default: opt->type_name("TEXT"); break;
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wardpose: ward action recognition pipeline and evaluation toolkit", "wardpose"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "wardpose 0.1.0");

  struct Sub {
    CLI::App* app;
    std::map<std::string, std::string> raw;
    std::string config_path;
  };
  std::map<std::string, Sub> subs;
  auto make = [&](const std::string& name, const std::string& desc, std::initializer_list<std::string_view> secs) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, desc);
    s.app->add_option("--config", s.config_path, "config file (fallback: $WARDPOSE_CONFIG)");
    add_config_options(*s.app, secs, s.raw);
  };
  make("prepare", "preprocess clips, annotate keyframes, export COCO-style splits",
       {"dataset", "train", "backend.detector", "backend.timeout_ms", "backend.handshake_timeout_ms", "run.min_confidence",
        "run.margin"});
  make("eval", "AP/mAP and macro precision/recall/F1 with a confusion matrix", {"eval"});
  make("run", "offline or online recognition with rendered overlays",
       {"run", "privacy", "backend", "input", "output"});
  make("blur", "pixelate faces in a clip",
       {"blur", "privacy.blur_block", "privacy.face_margin", "backend.detector", "backend.timeout_ms",
        "backend.handshake_timeout_ms", "run.min_confidence"});
  make("curves", "turn series,iteration,value logs into plot CSVs", {"curves"});

  std::string script;
  int version = kProtocolVersion;
  CLI::App* serve_app = app.add_subcommand("synthetic-backend", "serve a scripted backend on stdin/stdout");
  serve_app->group("");  // internal
  serve_app->add_option("--script", script, "script file")->required();
  serve_app->add_option("--protocol-version", version, "protocol version to announce");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (serve_app->parsed()) return cmd_synthetic_backend(script, version);
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      config::Config cfg;
      std::string path = s.config_path;
      if (path.empty()) {
        if (const char* env = std::getenv("WARDPOSE_CONFIG"); env != nullptr) path = env;
      }
      if (!path.empty()) cfg.merge_file(path);
      for (const auto& [key, value] : s.raw) {
        const config::KeySpec* k = config::find_key(key);
        if (s.app->get_option(config::flag_name(*k))->count() > 0) cfg.set(key, value, config::flag_name(*k));
      }
      if (name == "prepare") return cmd_prepare(cfg, std::cout);
      if (name == "eval") return cmd_eval(cfg, std::cout);
      if (name == "run") return cmd_run(cfg, std::cout);
      if (name == "blur") return cmd_blur(cfg, std::cout);
      if (name == "curves") return cmd_curves(cfg, std::cout, std::cerr);
    }
  } catch (const Error& e) {
    std::cerr << "wardpose: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wardpose: " << e.what() << "\n";
    return kExitBadData;
  } catch (const std::exception& e) {
    std::cerr << "wardpose: " << e.what() << "\n";
    return kExitBadData;
  }
  return kExitBadConfig;
}

}  // namespace wardpose::cli
