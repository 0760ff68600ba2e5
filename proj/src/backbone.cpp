#include "hemodet/backbone.hpp"

#include "hemodet/errors.hpp"

namespace hemodet {

Backbone::Backbone(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng)
    : c_(cfg.channels_coarse) {
  long c1 = cfg.channels_quarter, c2 = cfg.channels_eighth, c = cfg.channels_coarse;
  stem1_ = nn::Conv2dLayer(ps, "backbone.stem1", 3, c1, 3, 2, 1, rng);
  stem2_ = nn::Conv2dLayer(ps, "backbone.stem2", c1, c1, 3, 2, 1, rng);
  lat1_ = nn::Conv2dLayer(ps, "backbone.lat1", c1, c1, 3, 1, 1, rng);
  down3_ = nn::Conv2dLayer(ps, "backbone.down3", c1, c2, 3, 2, 1, rng);
  lat2_ = nn::Conv2dLayer(ps, "backbone.lat2", c2, c2, 3, 1, 1, rng);
  down4_ = nn::Conv2dLayer(ps, "backbone.down4", c2, c, 3, 2, 1, rng);
  for (int i = 0; i < 2; ++i)
    blocks_.emplace_back(ps, "backbone.block" + std::to_string(i), c, 4, 2 * c, rng);
}

FeaturePyramid Backbone::encode(const nn::Tensor& image, long frame_index) const {
  if (image.ndim() != 3 || image.dim(0) != 3) throw Error("encode: image must be [3,H,W]");
  long h = image.dim(1), w = image.dim(2);
  if (h % 16 != 0 || w % 16 != 0) throw Error("encode: image dims must be divisible by 16");
  if (!image.all_finite()) throw DataError("encode: non-finite input pixels");

  nn::Var x = nn::constant(image);
  nn::Var h2 = nn::gelu(stem2_(nn::gelu(stem1_(x))));  // [c1, H/4, W/4]
  nn::Var f1 = lat1_(h2);
  nn::Var h3 = nn::gelu(down3_(f1));  // [c2, H/8, W/8]
  nn::Var f2 = lat2_(h3);
  nn::Var h4 = nn::gelu(down4_(f2));  // [c, H/16, W/16]

  long gh = h / 16, gw = w / 16;
  nn::Var t = nn::chw_to_tokens(h4);
  t = nn::add(t, nn::constant(nn::sincos_position_grid(gh, gw, c_)));
  for (const auto& blk : blocks_) t = blk(t);

  FeaturePyramid fp;
  fp.tokens = t;
  fp.f2 = f2;
  fp.f1 = f1;
  fp.grid_h = gh;
  fp.grid_w = gw;
  fp.frame_index = frame_index;
  return fp;
}

std::vector<FeaturePyramid> Backbone::encode_window(const std::vector<nn::Tensor>& frames,
                                                    long first_index) const {
  std::vector<FeaturePyramid> out;
  out.reserve(frames.size());
  for (size_t i = 0; i < frames.size(); ++i)
    out.push_back(encode(frames[i], first_index + static_cast<long>(i)));
  return out;
}

}  // namespace hemodet
