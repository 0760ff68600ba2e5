#include "hemodet/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hemodet/viz.hpp"
#include "json.hpp"

namespace hemodet {

namespace {

using nlohmann::json;

PointPrediction gt_point(const BleedAnnotationData& ann, long h, long w, long idx) {
  PointPrediction p;
  p.frame_index = idx;
  if (ann.has_point) {
    p.x = ann.point_x / w;
    p.y = ann.point_y / h;
    p.score = 1.0;
    p.has_point = true;
  }
  return p;
}

json counts_or_null(double value, long count) {
  return count > 0 ? json(value) : json(nullptr);
}

json clip_json(const ClipEvalResult& c, const std::vector<double>& thresholds) {
  json pck = json::array();
  for (size_t i = 0; i < c.pck.size(); ++i) {
    pck.push_back({{"threshold", thresholds[i]},
                   {"value", c.pck[i].defined() ? json(c.pck[i].value()) : json(nullptr)},
                   {"correct", c.pck[i].correct},
                   {"eligible", c.pck[i].eligible}});
  }
  return {{"clip_id", c.clip_id},
          {"frames", c.frames},
          {"region_frames", c.region_frames},
          {"empty_frames", c.empty_frames},
          {"point_frames", c.point_frames()},
          {"iou", counts_or_null(c.mean_iou(), c.region_frames)},
          {"dice", counts_or_null(c.mean_dice(), c.region_frames)},
          {"fp_area_rate", counts_or_null(c.fp_area_rate(), c.empty_frames)},
          {"pck", pck},
          {"existence",
           {{"tp", c.exist_tp},
            {"fp", c.exist_fp},
            {"fn", c.exist_fn},
            {"tn", c.exist_tn},
            {"precision", counts_or_null(c.existence_precision(), c.exist_tp + c.exist_fp)},
            {"recall", counts_or_null(c.existence_recall(), c.exist_tp + c.exist_fn)}}}};
}

}  // namespace

ClipEvalResult evaluate_clip(OnlineDetector* det, const ModelConfig& cfg, const Clip& clip,
                             const EvalOptions& opts) {
  if (opts.mode == EvalMode::model && !det)
    throw Error("evaluate_clip: model mode needs a detector");
  const long h = clip.height(), w = clip.width();
  const long res = cfg.input_resolution;

  ClipEvalResult out;
  out.clip_id = clip.clip_id;
  out.frames = clip.size();
  out.pck.resize(cfg.pck_thresholds.size());

  if (det) det->reset();
  std::vector<PointPrediction> preds;
  std::vector<nn::Tensor> pred_masks;  // native resolution, may be undefined-empty
  preds.reserve(clip.frames.size());

  for (long k = 0; k < clip.size(); ++k) {
    const auto& frame = clip.frames[k];
    nn::Tensor pred_mask;  // [H,W], all-zero when no region predicted
    PointPrediction pred;
    pred.frame_index = frame.frame_index;

    switch (opts.mode) {
      case EvalMode::model: {
        nn::NoGradGuard ng(false);
        const bool native = (h == res && w == res);
        const nn::Tensor working =
            native ? frame.pixels : nn::resize_bilinear_plain(frame.pixels, res, res);
        FrameResult r = det->process_frame(working, frame.frame_index, clip.clip_id);
        pred_mask = native ? r.mask_binary : nn::resize_nearest_plain(r.mask_binary, h, w);
        pred = r.point;
        break;
      }
      case EvalMode::gt_as_prediction: {
        const auto& ann = clip.annotations[k];
        pred_mask = ann.has_region ? ann.mask : nn::Tensor({h, w});
        pred = gt_point(ann, h, w, frame.frame_index);
        break;
      }
      case EvalMode::empty_prediction:
        pred_mask = nn::Tensor({h, w});
        break;
    }

    const auto& ann = clip.annotations[k];
    if (ann.has_region) {
      ++out.region_frames;
      out.iou_sum += iou(pred_mask, ann.mask);
      out.dice_sum += dice_score(pred_mask, ann.mask);
    } else {
      ++out.empty_frames;
      double area = 0.0;
      for (long i = 0; i < h * w; ++i) area += pred_mask.data()[i] > 0.5 ? 1.0 : 0.0;
      out.fp_area_sum += area / (h * w);
    }
    if (ann.has_point) {
      pred.has_point ? ++out.exist_tp : ++out.exist_fn;
    } else {
      pred.has_point ? ++out.exist_fp : ++out.exist_tn;
    }

    preds.push_back(pred);
    pred_masks.push_back(pred_mask);
  }

  for (size_t t = 0; t < cfg.pck_thresholds.size(); ++t)
    out.pck[t] = pck(preds, clip.annotations, cfg.pck_thresholds[t], h, w);

  if (!opts.overlay_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(opts.overlay_dir) / clip.clip_id;
    fs::create_directories(dir);
    for (long k = 0; k < clip.size(); ++k) {
      const nn::Tensor* pm = pred_masks[k].defined() ? &pred_masks[k] : nullptr;
      ImageU8 img = render_overlay(clip.frames[k].pixels, pm, clip.annotations[k], preds[k]);
      char name[32];
      std::snprintf(name, sizeof(name), "%06ld_pred.png", clip.frames[k].frame_index);
      write_png((dir / name).string(), img);
    }
  }
  return out;
}

EvalReport evaluate_clips(OnlineDetector* det, const ModelConfig& cfg,
                          const std::vector<Clip>& clips, const EvalOptions& opts) {
  EvalReport report;
  report.pck_thresholds = cfg.pck_thresholds;
  for (const Clip& clip : clips) report.clips.push_back(evaluate_clip(det, cfg, clip, opts));
  std::sort(report.clips.begin(), report.clips.end(),
            [](const ClipEvalResult& a, const ClipEvalResult& b) {
              return a.clip_id < b.clip_id;
            });

  ClipEvalResult& agg = report.aggregate;
  agg.clip_id = "aggregate";
  agg.pck.resize(cfg.pck_thresholds.size());
  for (const auto& c : report.clips) {
    agg.frames += c.frames;
    agg.region_frames += c.region_frames;
    agg.empty_frames += c.empty_frames;
    agg.iou_sum += c.iou_sum;
    agg.dice_sum += c.dice_sum;
    agg.fp_area_sum += c.fp_area_sum;
    for (size_t t = 0; t < agg.pck.size(); ++t) {
      agg.pck[t].correct += c.pck[t].correct;
      agg.pck[t].eligible += c.pck[t].eligible;
    }
    agg.exist_tp += c.exist_tp;
    agg.exist_fp += c.exist_fp;
    agg.exist_fn += c.exist_fn;
    agg.exist_tn += c.exist_tn;
  }
  return report;
}

EvalReport evaluate_split(OnlineDetector* det, const ModelConfig& cfg,
                          const std::string& data_root,
                          const std::vector<std::string>& clip_ids,
                          const EvalOptions& opts) {
  std::vector<Clip> clips;
  std::vector<std::string> skipped;
  for (const std::string& id : clip_ids) {
    try {
      clips.push_back(load_clip(data_root, id));
    } catch (const Error& e) {
      std::fprintf(stderr, "warning: skipping clip %s: %s\n", id.c_str(), e.what());
      skipped.push_back(id);
    }
  }
  EvalReport report = evaluate_clips(det, cfg, clips, opts);
  report.skipped = std::move(skipped);
  std::sort(report.skipped.begin(), report.skipped.end());
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json clips = json::array();
  for (const auto& c : report.clips) clips.push_back(clip_json(c, report.pck_thresholds));
  const json j = {{"schema_version", 1},
                  {"pck_thresholds", report.pck_thresholds},
                  {"aggregate", clip_json(report.aggregate, report.pck_thresholds)},
                  {"clips", clips},
                  {"skipped_clips", report.skipped},
                  {"skipped_count", report.skipped.size()}};
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report: " + path);
  out << report_to_json(report);
}

}  // namespace hemodet
