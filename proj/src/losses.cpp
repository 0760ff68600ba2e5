#include "hemodet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hemodet/errors.hpp"

namespace hemodet {

namespace {

double sigmoid_d(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

nn::Var focal_loss(const nn::Var& logits, const nn::Tensor& target, double alpha,
                   double gamma) {
  const nn::Tensor& z = logits.value();
  if (!z.same_shape(target)) throw Error("focal_loss: shape mismatch");
  long n = z.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    double zc = std::clamp(z[i], -30.0, 30.0);
    double p = sigmoid_d(zc);
    double y = target[i];
    double pt = std::max(y > 0.5 ? p : 1.0 - p, 1e-12);
    double at = y > 0.5 ? alpha : 1.0 - alpha;
    acc += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  nn::Tensor out({1});
  out[0] = acc / static_cast<double>(n);

  nn::Tensor tgt = target.clone();
  return nn::make_op(std::move(out), {logits}, [tgt, alpha, gamma, n](nn::Node& node) {
    double up = node.grad[0] / static_cast<double>(n);
    const nn::Tensor& zv = node.parents[0].value();
    nn::Tensor g(zv.shape());
    for (long i = 0; i < n; ++i) {
      double zc = std::clamp(zv[i], -30.0, 30.0);
      double p = sigmoid_d(zc);
      double y = tgt[i];
      double pt = std::max(y > 0.5 ? p : 1.0 - p, 1e-12);
      double at = y > 0.5 ? alpha : 1.0 - alpha;
      double s = 2.0 * (y > 0.5 ? 1.0 : 0.0) - 1.0;
      double dterm_dpt = at * gamma * std::pow(1.0 - pt, gamma - 1.0) * std::log(pt) -
                         at * std::pow(1.0 - pt, gamma) / pt;
      g[i] = up * dterm_dpt * s * p * (1.0 - p);
    }
    node.parents[0].accum_grad(g);
  });
}

nn::Var dice_loss(const nn::Var& probs, const nn::Tensor& target, double eps) {
  const nn::Tensor& p = probs.value();
  if (!p.same_shape(target)) throw Error("dice_loss: shape mismatch");
  long n = p.size();
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (long i = 0; i < n; ++i) {
    inter += p[i] * target[i];
    psum += p[i];
    tsum += target[i];
  }
  double num = 2.0 * inter + eps, den = psum + tsum + eps;
  nn::Tensor out({1});
  out[0] = 1.0 - num / den;

  nn::Tensor tgt = target.clone();
  return nn::make_op(std::move(out), {probs}, [tgt, num, den, n](nn::Node& node) {
    double up = node.grad[0];
    nn::Tensor g(tgt.shape());
    for (long i = 0; i < n; ++i)
      g[i] = up * (-(2.0 * tgt[i]) / den + num / (den * den));
    node.parents[0].accum_grad(g);
  });
}

nn::Var smooth_l1(const nn::Var& pred, const nn::Tensor& gt) {
  const nn::Tensor& p = pred.value();
  if (!p.same_shape(gt)) throw Error("smooth_l1: shape mismatch");
  long n = p.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    double d = p[i] - gt[i];
    acc += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
  }
  nn::Tensor out({1});
  out[0] = acc;

  nn::Tensor g0 = gt.clone();
  return nn::make_op(std::move(out), {pred}, [g0, n](nn::Node& node) {
    double up = node.grad[0];
    const nn::Tensor& pv = node.parents[0].value();
    nn::Tensor g(g0.shape());
    for (long i = 0; i < n; ++i) {
      double d = pv[i] - g0[i];
      g[i] = up * (std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0));
    }
    node.parents[0].accum_grad(g);
  });
}

nn::Var existence_bce(const nn::Var& score, bool present) {
  const nn::Tensor& sv = score.value();
  double s = std::clamp(sv[0], 1e-12, 1.0 - 1e-12);
  double y = present ? 1.0 : 0.0;
  nn::Tensor out({1});
  out[0] = -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));

  return nn::make_op(std::move(out), {score}, [y](nn::Node& node) {
    double s = std::clamp(node.parents[0].value()[0], 1e-12, 1.0 - 1e-12);
    nn::Tensor g(node.parents[0].value().shape());
    g[0] = node.grad[0] * (-y / s + (1.0 - y) / (1.0 - s));
    node.parents[0].accum_grad(g);
  });
}

nn::Var mask_objective(const nn::Var& mask_logits, const nn::Var& edge_logits,
                       const nn::Tensor& gt_mask, const nn::Tensor& gt_edge,
                       const ModelConfig& cfg) {
  nn::Var region = nn::add(focal_loss(mask_logits, gt_mask),
                           dice_loss(nn::sigmoid(mask_logits), gt_mask));
  nn::Var edge = nn::add(focal_loss(edge_logits, gt_edge),
                         dice_loss(nn::sigmoid(edge_logits), gt_edge));
  return nn::add(nn::scale(region, cfg.region_weight), nn::scale(edge, cfg.edge_weight));
}

nn::Var point_objective(const nn::Var& coord, const nn::Var& score, bool gt_has_point,
                        double gt_x, double gt_y, const ModelConfig& cfg) {
  nn::Var loss = nn::scale(existence_bce(score, gt_has_point), cfg.score_weight);
  if (gt_has_point) {
    nn::Tensor gt({1, 2});
    gt.at(0, 0) = gt_x;
    gt.at(0, 1) = gt_y;
    loss = nn::add(loss, nn::scale(smooth_l1(coord, gt), cfg.point_weight));
  }
  return loss;
}

}  // namespace hemodet
