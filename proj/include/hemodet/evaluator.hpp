#pragma once

#include <string>
#include <vector>

#include "hemodet/detector.hpp"
#include "hemodet/metrics.hpp"

namespace hemodet {

/// What stands in for the model's per-frame output.
enum class EvalMode {
  model,             // stream frames through the detector
  gt_as_prediction,  // score ground truth against itself (plumbing check)
  empty_prediction,  // no region, no point on every frame (lower bound)
};

struct EvalOptions {
  EvalMode mode = EvalMode::model;
  std::string overlay_dir;  // when non-empty, write <clip>/<frame>_pred.png overlays
};

/// Accumulated counts for one clip (or, with summed fields, the aggregate).
/// Region metrics cover frames with a nonempty GT mask; empty-GT frames
/// contribute a false-positive area rate instead; PCK covers frames with a GT
/// point; existence precision/recall covers every frame.
struct ClipEvalResult {
  std::string clip_id;
  long frames = 0;
  long region_frames = 0;
  long empty_frames = 0;
  double iou_sum = 0.0, dice_sum = 0.0;
  double fp_area_sum = 0.0;
  std::vector<PckCount> pck;  // aligned with EvalReport::pck_thresholds
  long exist_tp = 0, exist_fp = 0, exist_fn = 0, exist_tn = 0;

  double mean_iou() const { return region_frames > 0 ? iou_sum / region_frames : 0.0; }
  double mean_dice() const { return region_frames > 0 ? dice_sum / region_frames : 0.0; }
  double fp_area_rate() const { return empty_frames > 0 ? fp_area_sum / empty_frames : 0.0; }
  long point_frames() const { return exist_tp + exist_fn; }
  double existence_precision() const {
    const long d = exist_tp + exist_fp;
    return d > 0 ? static_cast<double>(exist_tp) / d : 0.0;
  }
  double existence_recall() const {
    const long d = exist_tp + exist_fn;
    return d > 0 ? static_cast<double>(exist_tp) / d : 0.0;
  }
};

struct EvalReport {
  std::vector<double> pck_thresholds;
  std::vector<ClipEvalResult> clips;  // sorted by clip_id
  ClipEvalResult aggregate;           // frame-weighted: plain sums over clips
  std::vector<std::string> skipped;   // clips that failed to load
};

/// Streams one clip through the detector (banks reset first), frames in
/// order, and scores predictions at native resolution.
ClipEvalResult evaluate_clip(OnlineDetector* det, const ModelConfig& cfg, const Clip& clip,
                             const EvalOptions& opts = {});

/// det may be null only for the debug modes.
EvalReport evaluate_clips(OnlineDetector* det, const ModelConfig& cfg,
                          const std::vector<Clip>& clips, const EvalOptions& opts = {});

/// Loads each clip from data_root; load failures are recorded in
/// report.skipped and the clip is excluded from every metric.
EvalReport evaluate_split(OnlineDetector* det, const ModelConfig& cfg,
                          const std::string& data_root,
                          const std::vector<std::string>& clip_ids,
                          const EvalOptions& opts = {});

/// Versioned JSON (schema_version 1). Clip order and key order are fixed, so
/// equal reports serialize byte-for-byte equal.
std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

}  // namespace hemodet
