#pragma once

#include <deque>
#include <utility>

#include "hemodet/backbone.hpp"
#include "hemodet/config.hpp"
#include "hemodet/gabor.hpp"
#include "hemodet/nn.hpp"

namespace hemodet {

/// One remembered frame: memory feature tokens plus the binary mask that the
/// point branch's Eq.-5 masking reads back.
struct MaskMemoryEntry {
  nn::Var memory;    // [s, c]
  nn::Tensor mask;   // [H, W] binary, working resolution
  long frame_index = 0;
};

/// FIFO of the last `capacity` frames, oldest evicted first.
class MaskMemoryBank {
 public:
  explicit MaskMemoryBank(long capacity) : capacity_(capacity) {}

  void push(MaskMemoryEntry entry);
  void clear() { entries_.clear(); }
  const std::deque<MaskMemoryEntry>& entries() const { return entries_; }
  long size() const { return static_cast<long>(entries_.size()); }
  long capacity() const { return capacity_; }

 private:
  long capacity_;
  std::deque<MaskMemoryEntry> entries_;
};

/// Bleeding-region pathway: memory attention over past frames, the
/// Laplacian-of-Gabor edge generator, adaptive edge/point prompt encoding, a
/// two-way mask decoder, and the memory encoder feeding the bank.
class MaskBranch {
 public:
  MaskBranch(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng);

  /// Self-attention over the frame tokens, then cross-attention into the bank
  /// (skipped when empty). Memory keys carry a learned per-age embedding.
  nn::Var attend_memory(const FeaturePyramid& fp, const MaskMemoryBank& bank) const;

  /// Gates the attended features with their edge response (ReLU(F) ⊙ L_g∗F),
  /// then upsamples twice with filter / project / high-res-fusion stages down
  /// to a 1-channel edge logit map at stride 4. Returns (edge logits,
  /// gated feature tokens for the decoder).
  std::pair<nn::Var, nn::Var> edge_generate(const nn::Var& f_mask, long grid_h, long grid_w,
                                            const nn::Var& f1, const nn::Var& f2) const;

  /// Encodes the stride-4 edge logits onto the coarse grid (E_p) and the
  /// point prompt into one token (P_p); absent point yields the learned
  /// no-point token.
  std::pair<nn::Var, nn::Var> encode_prompts(const nn::Var& edge_logits, bool has_point,
                                             double px, double py) const;

  /// Two-way token/image decoder over gated features + edge prompt, followed
  /// by ×4 upscaling with f2/f1 fusion and a hypernetwork dot product.
  /// Returns full-resolution mask logits [1, out_h, out_w].
  nn::Var decode_mask(const nn::Var& gated_tokens, long grid_h, long grid_w,
                      const nn::Var& edge_prompt, const nn::Var& point_prompt,
                      const nn::Var& f1, const nn::Var& f2, long out_h, long out_w) const;

  /// Fuses the frame tokens with the (nearest-downsampled) predicted mask
  /// into the memory feature pushed to the bank.
  nn::Var encode_memory(const nn::Var& frame_tokens, const nn::Tensor& mask_binary,
                        long grid_h, long grid_w) const;

  const GaborBank& gabor() const { return gabor_; }

 private:
  nn::Var point_prompt_token(bool has_point, double px, double py) const;

  long c_, c1_, c2_;
  GaborBank gabor_;

  nn::SelfAttnBlock mem_self_;
  nn::CrossAttnBlock mem_cross_;
  nn::Var age_embed_;  // [capacity, c]

  nn::Conv2dLayer eg_proj_a_, eg_skip2_, eg_proj_b_, eg_skip1_, eg_out_;

  nn::Conv2dLayer pconv1_, pconv2_, pconv3_;
  nn::LayerNorm pln1_, pln2_;
  nn::Tensor fourier_;       // fixed [2, c/2]
  nn::Var point_type_, no_point_;

  nn::Var mask_token_;
  std::vector<nn::TwoWayBlock> dec_blocks_;
  nn::MultiHeadAttention dec_final_;
  nn::LayerNorm dec_final_ln_;
  nn::Conv2dLayer up_a_, up_skip2_, up_b_, up_skip1_, up_out_;
  nn::Mlp hyper_;

  nn::Conv2dLayer mem_mask_conv_;
  nn::Linear mem_lin_a_, mem_lin_b_;
};

/// Gaussian Fourier-feature matrix shared by the prompt embeddings; fixed at
/// construction (not trained), deterministic in the seed.
nn::Tensor fourier_matrix(long dim_half, RngStream rng);

/// sin/cos Fourier embedding of a normalized point: concat(sin(2π p·B),
/// cos(2π p·B)) as a [1, dim] row.
nn::Tensor fourier_embed(double px, double py, const nn::Tensor& b);

}  // namespace hemodet
