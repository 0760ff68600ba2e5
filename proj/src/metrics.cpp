#include "hemodet/metrics.hpp"

#include <cmath>

#include "hemodet/errors.hpp"

namespace hemodet {

namespace {

// Treats any value > 0.5 as foreground so both {0,1} masks and probability
// maps binarized upstream behave identically.
inline bool on(const nn::Tensor& t, long i) { return t.data()[i] > 0.5; }

}  // namespace

double iou(const nn::Tensor& pred, const nn::Tensor& gt) {
  if (!pred.same_shape(gt)) throw Error("iou: shape mismatch");
  long inter = 0, uni = 0;
  const long n = nn::numel(pred.shape());
  for (long i = 0; i < n; ++i) {
    const bool p = on(pred, i), g = on(gt, i);
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;  // both empty: perfect agreement
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice_score(const nn::Tensor& pred, const nn::Tensor& gt) {
  if (!pred.same_shape(gt)) throw Error("dice_score: shape mismatch");
  long inter = 0, total = 0;
  const long n = nn::numel(pred.shape());
  for (long i = 0; i < n; ++i) {
    const bool p = on(pred, i), g = on(gt, i);
    inter += (p && g) ? 1 : 0;
    total += (p ? 1 : 0) + (g ? 1 : 0);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

PckCount pck(const std::vector<PointPrediction>& preds,
             const std::vector<BleedAnnotationData>& gts, double fraction, long height,
             long width) {
  if (preds.size() != gts.size()) throw Error("pck: frame count mismatch");
  const double diag = std::sqrt(static_cast<double>(height) * height +
                                static_cast<double>(width) * width);
  const double radius = fraction * diag;
  PckCount out;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (!gts[i].has_point) continue;  // frames without a GT point are skipped
    ++out.eligible;
    if (!preds[i].has_point) continue;  // declared absent on an eligible frame
    const double dx = preds[i].x * width - gts[i].point_x;
    const double dy = preds[i].y * height - gts[i].point_y;
    if (std::sqrt(dx * dx + dy * dy) <= radius) ++out.correct;
  }
  return out;
}

}  // namespace hemodet
