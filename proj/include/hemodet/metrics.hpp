#pragma once

#include <vector>

#include "hemodet/dataset.hpp"
#include "hemodet/point_branch.hpp"
#include "hemodet/tensor.hpp"

namespace hemodet {

/// Intersection over union of two binary maps; 1.0 when both are empty.
double iou(const nn::Tensor& pred, const nn::Tensor& gt);

/// 2|∩|/(|pred|+|gt|); 1.0 when both are empty.
double dice_score(const nn::Tensor& pred, const nn::Tensor& gt);

/// PCK tally at one threshold: frames with a GT point are eligible; a frame
/// counts correct iff the model declares a point and the pixel distance is
/// within fraction * image diagonal (inclusive).
struct PckCount {
  long correct = 0;
  long eligible = 0;

  double value() const { return eligible > 0 ? static_cast<double>(correct) / eligible : 0.0; }
  bool defined() const { return eligible > 0; }
};

/// preds and gts are aligned frame lists; pred coords are normalized, gt
/// coords are pixels in a height x width image.
PckCount pck(const std::vector<PointPrediction>& preds,
             const std::vector<BleedAnnotationData>& gts, double fraction, long height,
             long width);

}  // namespace hemodet
