#pragma once

#include <string>
#include <vector>

#include "hemodet/dataset.hpp"
#include "hemodet/image_io.hpp"
#include "hemodet/point_branch.hpp"

namespace hemodet {

/// Draws prediction vs. ground truth on top of a frame: predicted mask
/// contour in red, GT contour in green, predicted point as a red cross, GT
/// point as a green circle. pred_mask is [H,W] 0/1 at frame resolution and
/// may be null (no predicted region).
ImageU8 render_overlay(const nn::Tensor& frame_rgb, const nn::Tensor* pred_mask,
                       const BleedAnnotationData& gt, const PointPrediction& pred);

/// One named series of per-epoch values for the curve plot.
struct MetricSeries {
  std::string label;
  std::vector<double> values;  // indexed by epoch
};

/// Simple line chart of metric-vs-epoch curves on a white canvas with axes,
/// tick labels, and a legend. Values are clamped to [lo, hi].
ImageU8 plot_metric_curves(const std::vector<MetricSeries>& series, double lo, double hi,
                           long width = 640, long height = 400);

}  // namespace hemodet
