#include "hemodet/gabor.hpp"

#include <algorithm>
#include <cmath>

namespace hemodet {

nn::Tensor gabor_kernel(const GaborParams& p, double theta) {
  if (p.sigma <= 0 || p.wavelength <= 0 || p.aspect <= 0)
    throw ConfigError("gabor_kernel: sigma, wavelength and aspect must be positive");
  long K = p.kernel_size;
  long r = K / 2;
  nn::Tensor k({K, K});
  double ct = std::cos(theta), st = std::sin(theta);
  for (long y = -r; y <= r; ++y)
    for (long x = -r; x <= r; ++x) {
      double xp = x * ct + y * st;
      double yp = -x * st + y * ct;
      double env = std::exp(-(xp * xp + p.aspect * p.aspect * yp * yp) /
                            (2.0 * p.sigma * p.sigma));
      double carrier = std::cos(2.0 * M_PI * xp / p.wavelength + p.phase);
      k.at(y + r, x + r) = env * carrier;
    }
  return k;
}

nn::Tensor laplacian_of_kernel(const nn::Tensor& k) {
  long h = k.dim(0), w = k.dim(1);
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return k.at(y, x);
  };
  nn::Tensor out({h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      out.at(y, x) = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * k.at(y, x);
  return out;
}

GaborBank make_gabor_bank(const GaborParams& p) {
  GaborBank bank;
  bank.params = p;
  for (long i = 0; i < p.orientations; ++i) {
    double theta = M_PI * static_cast<double>(i) / static_cast<double>(p.orientations);
    nn::Tensor g = gabor_kernel(p, theta);
    bank.gabor.push_back(g);
    bank.lg.push_back(laplacian_of_kernel(g));
  }
  return bank;
}

nn::Var lg_filter(const nn::Var& x, const GaborBank& bank) {
  nn::Var acc;
  for (const nn::Tensor& k : bank.lg) {
    nn::Var r = nn::conv2d_fixed(x, k, nn::PadMode::kReplicate);
    acc = acc.defined() ? nn::add(acc, r) : r;
  }
  return acc;
}

}  // namespace hemodet
