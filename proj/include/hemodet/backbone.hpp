#pragma once

#include <vector>

#include "hemodet/config.hpp"
#include "hemodet/nn.hpp"

namespace hemodet {

/// Per-frame multi-scale features. tokens is the flattened stride-16 grid
/// ([grid_h*grid_w, c]); f2 and f1 are the stride-8 / stride-4 maps kept in
/// CHW layout for the fusion stages.
struct FeaturePyramid {
  nn::Var tokens;  // [s, c]
  nn::Var f2;      // [c2, H/8, W/8]
  nn::Var f1;      // [c1, H/4, W/4]
  long grid_h = 0, grid_w = 0;
  long frame_index = 0;
};

/// Shared 3-stage image encoder: strided conv stem down to stride 16, lateral
/// convs tapping the stride-4 and stride-8 maps, then self-attention blocks
/// over the coarse tokens with a fixed sine-cosine grid embedding. Frames are
/// encoded independently; temporal fusion happens in the branches.
class Backbone {
 public:
  Backbone(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng);

  /// image is [3,H,W] in [0,1], H and W divisible by 16. Throws DataError on
  /// non-finite pixels, Error on bad shape.
  FeaturePyramid encode(const nn::Tensor& image, long frame_index) const;

  /// Convenience wrapper encoding a short frame sequence one by one.
  std::vector<FeaturePyramid> encode_window(const std::vector<nn::Tensor>& frames,
                                            long first_index) const;

 private:
  nn::Conv2dLayer stem1_, stem2_, lat1_, down3_, lat2_, down4_;
  std::vector<nn::SelfAttnBlock> blocks_;
  long c_;
};

}  // namespace hemodet
