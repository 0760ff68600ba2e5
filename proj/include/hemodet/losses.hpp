#pragma once

#include "hemodet/autograd.hpp"
#include "hemodet/config.hpp"

namespace hemodet {

/// Mean over pixels of -alpha_t (1-p_t)^gamma log(p_t) on sigmoid(logits);
/// logits clamped to +-30, p_t floored at 1e-12.
nn::Var focal_loss(const nn::Var& logits, const nn::Tensor& target, double alpha = 0.25,
                   double gamma = 2.0);

/// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps) over probability maps.
nn::Var dice_loss(const nn::Var& probs, const nn::Tensor& target, double eps = 1.0);

/// Per-component Huber (0.5 d^2 below |d|=1, |d|-0.5 above), summed.
nn::Var smooth_l1(const nn::Var& pred, const nn::Tensor& gt);

/// Binary cross-entropy on an existence score (clamped away from 0/1).
nn::Var existence_bce(const nn::Var& score, bool present);

/// region_weight * (focal+dice)(mask) + edge_weight * (focal+dice)(edge).
nn::Var mask_objective(const nn::Var& mask_logits, const nn::Var& edge_logits,
                       const nn::Tensor& gt_mask, const nn::Tensor& gt_edge,
                       const ModelConfig& cfg);

/// point_weight * smooth_l1 (only when the frame has a point) +
/// score_weight * existence_bce. gt coordinates are normalized.
nn::Var point_objective(const nn::Var& coord, const nn::Var& score, bool gt_has_point,
                        double gt_x, double gt_y, const ModelConfig& cfg);

}  // namespace hemodet
