#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hemodet/checkpoint.hpp"
#include "hemodet/evaluator.hpp"
#include "hemodet/synth.hpp"
#include "hemodet/trainer.hpp"
#include "hemodet/viz.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hemodet;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Deliberately timestamp-free so identical invocations write identical trees.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, const std::string& config_text,
                    long seed) {
  fs::create_directories(out_dir);
  const json manifest = {
      {"command", command},
      {"argv", argv},
      {"config", config_text.empty() ? json(nullptr) : json(config_text)},
      {"seed", seed},
      {"versions",
       {{"tool", kToolVersion}, {"checkpoint_format", 1}, {"report_schema", 1}}}};
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
}

ModelConfig config_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.config_text.empty())
    throw DataError("checkpoint carries no config snapshot");
  ModelConfig cfg = parse_config(ck.meta.config_text);
  validate_config(cfg);
  return cfg;
}

std::vector<std::string> split_ids(const std::string& data, const std::string& which) {
  if (which == "all") return list_clip_ids(data);
  const SplitLists s = load_splits(data);
  if (which == "train") return s.train;
  if (which == "test") return s.test;
  throw ConfigError("unknown split: " + which + " (want train|test|all)");
}

// ---- synth ----

int cmd_synth(const std::vector<std::string>& argv, const std::string& out, long clips,
              long frames, long height, long width, long seed, const std::string& motion,
              bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force) {
    std::cerr << "refusing to write into non-empty directory " << out
              << " (pass --force to override)\n";
    return 1;
  }
  write_manifest(out, "synth", argv, "", seed);
  synth_dataset(out, clips, frames, height, width, motion, seed);
  std::cout << (fs::path(out) / "splits.json").string() << "\n";
  std::cout << out << "\n";
  return 0;
}

// ---- train ----

int cmd_train(const std::vector<std::string>& argv, const std::string& config_path,
              const std::string& data, const std::string& out, bool resume,
              const std::string& resume_from) {
  const ModelConfig cfg = load_config(config_path);
  write_manifest(out, "train", argv, serialize_config(cfg), cfg.seed);
  Trainer trainer(cfg, data, out);
  if (!resume_from.empty() && resume_from != trainer.last_checkpoint_path()) {
    fs::copy_file(resume_from, trainer.last_checkpoint_path(),
                  fs::copy_options::overwrite_existing);
    resume = true;
  }
  try {
    trainer.train(resume);
  } catch (const TrainAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    std::cout << e.dump_path << "\n";
    return 2;
  }
  std::cout << trainer.metrics_log_path() << "\n";
  std::cout << trainer.best_checkpoint_path() << "\n";
  std::cout << trainer.last_checkpoint_path() << "\n";
  return 0;
}

// ---- eval ----

int cmd_eval(const std::vector<std::string>& argv, const std::string& ckpt_path,
             const std::string& config_path, const std::string& data,
             const std::string& split, const std::string& out, bool overlays,
             bool gt_as_pred, bool empty_pred) {
  ModelConfig cfg;
  std::unique_ptr<OnlineDetector> det;
  if (!ckpt_path.empty()) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    cfg = config_path.empty() ? config_from_checkpoint(ck) : load_config(config_path);
    det = std::make_unique<OnlineDetector>(cfg, data);
    load_params(det->params(), ck);
  } else {
    if (!gt_as_pred && !empty_pred)
      throw ConfigError("eval: --checkpoint is required unless --gt-as-pred or --empty-pred");
    cfg = config_path.empty() ? ModelConfig{} : load_config(config_path);
  }
  write_manifest(out, "eval", argv, serialize_config(cfg), cfg.seed);

  EvalOptions opts;
  if (gt_as_pred)
    opts.mode = EvalMode::gt_as_prediction;
  else if (empty_pred)
    opts.mode = EvalMode::empty_prediction;
  if (overlays) {
    opts.overlay_dir = (fs::path(out) / "overlays").string();
    fs::create_directories(opts.overlay_dir);
  }

  const EvalReport report = evaluate_split(det.get(), cfg, data, split_ids(data, split), opts);
  const std::string report_path = (fs::path(out) / "report.json").string();
  write_report(report, report_path);
  if (overlays) std::cout << opts.overlay_dir << "\n";
  std::cout << report_path << "\n";
  return 0;
}

// ---- infer ----

int cmd_infer(const std::vector<std::string>& argv, const std::string& ckpt_path,
              const std::string& clip_dir, const std::string& out) {
  // a clip directory is <data_root>/clips/<clip_id>
  const fs::path clip_path = fs::absolute(clip_dir);
  const std::string clip_id = clip_path.filename().string();
  if (clip_path.parent_path().filename() != "clips")
    throw DataError("infer: --clip must point at <data_root>/clips/<clip_id>, got " +
                    clip_dir);
  const std::string data_root = clip_path.parent_path().parent_path().string();

  const Checkpoint ck = load_checkpoint(ckpt_path);
  const ModelConfig cfg = config_from_checkpoint(ck);
  OnlineDetector det(cfg, data_root);
  load_params(det.params(), ck);
  write_manifest(out, "infer", argv, serialize_config(cfg), cfg.seed);

  const Clip clip = load_clip(data_root, clip_id);
  const long h = clip.height(), w = clip.width();
  const long res = cfg.input_resolution;
  const fs::path mask_dir = fs::path(out) / "masks";
  fs::create_directories(mask_dir);

  std::ofstream points(fs::path(out) / "points.jsonl", std::ios::binary);
  if (!points) throw Error("cannot write points.jsonl in " + out);

  det.reset();
  nn::NoGradGuard ng(false);
  for (long k = 0; k < clip.size(); ++k) {
    const auto& frame = clip.frames[k];
    const bool native = (h == res && w == res);
    const nn::Tensor working =
        native ? frame.pixels : nn::resize_bilinear_plain(frame.pixels, res, res);
    const FrameResult r = det.process_frame(working, frame.frame_index, clip_id);
    const nn::Tensor mask =
        native ? r.mask_binary : nn::resize_nearest_plain(r.mask_binary, h, w);
    char name[32];
    std::snprintf(name, sizeof(name), "%06ld.png", frame.frame_index);
    write_mask_png((mask_dir / name).string(), mask);

    json rec = {{"idx", frame.frame_index},
                {"point", r.point.has_point
                              ? json::array({r.point.x * w, r.point.y * h})
                              : json(nullptr)},
                {"score", r.point.score}};
    points << rec.dump() << "\n";
  }
  std::cout << (fs::path(out) / "points.jsonl").string() << "\n";
  std::cout << out << "\n";
  return 0;
}

// ---- viz ----

struct PredPoint {
  bool has = false;
  double x = 0, y = 0;  // pixels
};

std::vector<PredPoint> read_points_jsonl(const std::string& path) {
  std::vector<PredPoint> out;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PredPoint p;
    if (j.contains("point") && !j["point"].is_null()) {
      p.has = true;
      p.x = j["point"][0].get<double>();
      p.y = j["point"][1].get<double>();
    }
    out.push_back(p);
  }
  return out;
}

int cmd_viz(const std::vector<std::string>& argv, const std::string& pred,
            const std::string& data, const std::string& out, const std::string& log_path) {
  write_manifest(out, "viz", argv, "", 0);
  long warnings = 0;
  const auto warn = [&](const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
    ++warnings;
  };

  // overlays for every clip that has predictions
  for (const std::string& id : list_clip_ids(data)) {
    const fs::path clip_pred = fs::path(pred) / id;
    if (!fs::exists(clip_pred)) {
      warn("no predictions for clip " + id);
      continue;
    }
    const Clip clip = load_clip(data, id);
    std::vector<PredPoint> pts;
    if (fs::exists(clip_pred / "points.jsonl"))
      pts = read_points_jsonl((clip_pred / "points.jsonl").string());
    else
      warn("missing points.jsonl for clip " + id);
    if (!pts.empty() && static_cast<long>(pts.size()) != clip.size())
      warn("points.jsonl of clip " + id + " has " + std::to_string(pts.size()) +
           " records for " + std::to_string(clip.size()) + " frames");

    const fs::path clip_out = fs::path(out) / id;
    fs::create_directories(clip_out);
    for (long k = 0; k < clip.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06ld.png", clip.frames[k].frame_index);
      const fs::path mask_path = clip_pred / "masks" / name;
      if (!fs::exists(mask_path)) {
        warn("clip " + id + ": no predicted mask for frame " + name);
        continue;  // partial output
      }
      const nn::Tensor mask = read_mask_png(mask_path.string());
      PointPrediction pp;
      if (k < static_cast<long>(pts.size()) && pts[k].has) {
        pp.has_point = true;
        pp.x = pts[k].x / clip.width();
        pp.y = pts[k].y / clip.height();
        pp.score = 1.0;
      }
      const ImageU8 img =
          render_overlay(clip.frames[k].pixels, &mask, clip.annotations[k], pp);
      char oname[32];
      std::snprintf(oname, sizeof(oname), "%06ld_pred.png", clip.frames[k].frame_index);
      write_png((clip_out / oname).string(), img);
    }
  }

  // metric curves from the training log
  if (!log_path.empty()) {
    std::ifstream in(log_path, std::ios::binary);
    if (!in) throw DataError("cannot read metrics log: " + log_path);
    MetricSeries iou_s{"iou", {}}, dice_s{"dice", {}};
    std::vector<MetricSeries> pck_s;
    MetricSeries mask_l{"mask", {}}, point_l{"point", {}};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      iou_s.values.push_back(j.value("iou", 0.0));
      dice_s.values.push_back(j.value("dice", 0.0));
      mask_l.values.push_back(j.value("mask_loss", 0.0));
      point_l.values.push_back(j.value("point_loss", 0.0));
      if (j.contains("pck")) {
        size_t ti = 0;
        for (const auto& [key, val] : j["pck"].items()) {
          if (ti >= pck_s.size()) pck_s.push_back({key + "%", {}});
          pck_s[ti].values.push_back(val.is_null() ? 0.0 : val.get<double>());
          ++ti;
        }
      }
    }
    if (iou_s.values.empty()) {
      warn("metrics log is empty: " + log_path);
    } else {
      write_png((fs::path(out) / "iou_per_epoch.png").string(),
                plot_metric_curves({iou_s, dice_s}, 0.0, 1.0));
      write_png((fs::path(out) / "pck_per_epoch.png").string(),
                plot_metric_curves(pck_s, 0.0, 1.0));
      double hi = 0.0;
      for (double v : mask_l.values) hi = std::max(hi, v);
      for (double v : point_l.values) hi = std::max(hi, v);
      write_png((fs::path(out) / "loss_per_epoch.png").string(),
                plot_metric_curves({mask_l, point_l}, 0.0, hi > 0 ? hi * 1.05 : 1.0));
      std::cout << (fs::path(out) / "iou_per_epoch.png").string() << "\n";
      std::cout << (fs::path(out) / "pck_per_epoch.png").string() << "\n";
    }
  }
  if (warnings > 0)
    std::cerr << warnings << " warning(s); output may be partial\n";
  std::cout << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online bleeding-region segmentation and bleeding-point localization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("hemodet ") + kToolVersion);
  std::vector<std::string> args(argv, argv + argc);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string s_out, s_motion = "pan";
  long s_clips = 4, s_frames = 32, s_h = 128, s_w = 128, s_seed = 0;
  bool s_force = false;
  synth->add_option("--out", s_out, "Output dataset root")->required();
  synth->add_option("--clips", s_clips, "Number of clips");
  synth->add_option("--frames", s_frames, "Frames per clip");
  synth->add_option("--height", s_h, "Frame height");
  synth->add_option("--width", s_w, "Frame width");
  synth->add_option("--seed", s_seed, "Generator seed");
  synth->add_option("--motion", s_motion, "Camera motion: static|pan|drift")
      ->check(CLI::IsMember({"static", "pan", "drift"}));
  synth->add_flag("--force", s_force, "Allow writing into a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "Train the detector");
  std::string t_config, t_data, t_out, t_resume_from;
  bool t_resume = false;
  train->add_option("--config", t_config, "Config file")->required();
  train->add_option("--data", t_data, "Dataset root")->required();
  train->add_option("--out", t_out, "Run directory")->required();
  train->add_flag("--resume", t_resume, "Continue from <out>/last.ckpt");
  train->add_option("--resume-from", t_resume_from, "Continue from an explicit checkpoint");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string e_ckpt, e_config, e_data, e_split = "test", e_out;
  bool e_overlays = false, e_gt = false, e_empty = false;
  eval->add_option("--checkpoint", e_ckpt, "Checkpoint to evaluate");
  eval->add_option("--config", e_config, "Config override (default: checkpoint snapshot)");
  eval->add_option("--data", e_data, "Dataset root")->required();
  eval->add_option("--split", e_split, "Clip split: train|test|all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_option("--out", e_out, "Output directory")->required();
  eval->add_flag("--overlays", e_overlays, "Write per-frame overlay PNGs");
  eval->add_flag("--gt-as-pred", e_gt, "Debug: score ground truth against itself");
  eval->add_flag("--empty-pred", e_empty, "Debug: score all-empty predictions");

  // infer
  auto* infer = app.add_subcommand("infer", "Run one clip through a checkpoint");
  std::string i_ckpt, i_clip, i_out;
  infer->add_option("--checkpoint", i_ckpt, "Checkpoint")->required();
  infer->add_option("--clip", i_clip, "Clip directory (<root>/clips/<id>)")->required();
  infer->add_option("--out", i_out, "Output directory")->required();

  // viz
  auto* viz = app.add_subcommand("viz", "Overlays from predictions + metric curves");
  std::string v_pred, v_data, v_out, v_log;
  viz->add_option("--pred", v_pred, "Predictions root (per-clip infer outputs)")->required();
  viz->add_option("--data", v_data, "Dataset root")->required();
  viz->add_option("--out", v_out, "Output directory")->required();
  viz->add_option("--log", v_log, "metrics.jsonl from a training run (adds plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed())
      return cmd_synth(args, s_out, s_clips, s_frames, s_h, s_w, s_seed, s_motion, s_force);
    if (train->parsed())
      return cmd_train(args, t_config, t_data, t_out, t_resume, t_resume_from);
    if (eval->parsed())
      return cmd_eval(args, e_ckpt, e_config, e_data, e_split, e_out, e_overlays, e_gt,
                      e_empty);
    if (infer->parsed()) return cmd_infer(args, i_ckpt, i_clip, i_out);
    if (viz->parsed()) return cmd_viz(args, v_pred, v_data, v_out, v_log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
