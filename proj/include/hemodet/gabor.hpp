#pragma once

#include <vector>

#include "hemodet/autograd.hpp"
#include "hemodet/config.hpp"

namespace hemodet {

/// Real-valued oriented Gabor kernel sampled on the centered K x K integer
/// grid: exp(-(x'^2 + g^2 y'^2)/(2 s^2)) * cos(2 pi x'/lambda + psi) with
/// x' = x cos(t) + y sin(t), y' = -x sin(t) + y cos(t). Rows index y, cols x.
nn::Tensor gabor_kernel(const GaborParams& p, double theta);

/// 5-point discrete Laplacian of a kernel with replicated borders. The result
/// sums to zero exactly (telescoping), so it annihilates constant inputs
/// under replicate padding.
nn::Tensor laplacian_of_kernel(const nn::Tensor& k);

/// Fixed edge-selective filter bank: one Gabor and one Laplacian-of-Gabor
/// kernel per orientation, evenly spaced over [0, pi).
struct GaborBank {
  GaborParams params;
  std::vector<nn::Tensor> gabor;
  std::vector<nn::Tensor> lg;
};

GaborBank make_gabor_bank(const GaborParams& p);

/// Applies every Laplacian-of-Gabor kernel depthwise (replicate padding) and
/// sums the orientation responses. Differentiable w.r.t. x; kernels fixed.
nn::Var lg_filter(const nn::Var& x, const GaborBank& bank);

}  // namespace hemodet
