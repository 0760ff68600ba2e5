#pragma once

#include <deque>

#include "hemodet/backbone.hpp"
#include "hemodet/config.hpp"
#include "hemodet/flow.hpp"
#include "hemodet/mask_branch.hpp"
#include "hemodet/nn.hpp"

namespace hemodet {

/// Bleeding-point output for one frame; coord is normalized to [0,1]² and
/// only meaningful when has_point (score >= existence threshold).
struct PointPrediction {
  double x = 0.0, y = 0.0;
  double score = 0.0;
  bool has_point = false;
  long frame_index = 0;
};

struct PointMemoryEntry {
  nn::Var memory;  // [s, c]
  Offset2 offset;  // camera offset paired with this frame
  long frame_index = 0;
};

class PointMemoryBank {
 public:
  explicit PointMemoryBank(long capacity) : capacity_(capacity) {}

  void push(PointMemoryEntry entry);
  void clear() { entries_.clear(); }
  const std::deque<PointMemoryEntry>& entries() const { return entries_; }
  long size() const { return static_cast<long>(entries_.size()); }
  long capacity() const { return capacity_; }

 private:
  long capacity_;
  std::deque<PointMemoryEntry> entries_;
};

/// Bleeding-point pathway: camera-offset-corrected point memory concatenated
/// with mask memory as reference features, attention over the frame tokens,
/// and a token decoder emitting one coordinate + confidence.
class PointBranch {
 public:
  PointBranch(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng);

  /// Per remembered frame: offset -> MLP embedding added to the point memory
  /// tokens, concatenated with the same frame's (detached) mask memory.
  /// Returns an undefined Var when the banks are empty.
  nn::Var build_reference_features(const PointMemoryBank& bank,
                                   const MaskMemoryBank& mask_bank) const;

  /// Self-attention over frame tokens, cross-attention into the reference
  /// features when present.
  nn::Var attend_memory(const FeaturePyramid& fp, const nn::Var& reference) const;

  struct Decoded {
    nn::Var coord;  // [1,2] in [0,1]
    nn::Var score;  // [1,1] in [0,1]
    PointPrediction pred;
  };
  Decoded decode(const nn::Var& f_point, long grid_h, long grid_w, long frame_index,
                 double existence_threshold) const;

  /// Point memory feature for the bank: frame tokens fused with the predicted
  /// coordinate's Fourier embedding (learned absent token when no point).
  nn::Var encode_memory(const nn::Var& f_point, const PointPrediction& pred) const;

 private:
  long c_;
  nn::SelfAttnBlock mem_self_;
  nn::CrossAttnBlock mem_cross_;
  nn::Mlp offset_mlp_;

  nn::Var out_token_, prompt_tokens_;
  std::vector<nn::TwoWayBlock> dec_blocks_;
  nn::MultiHeadAttention dec_final_;
  nn::LayerNorm dec_final_ln_;
  nn::Mlp coord_head_, score_head_;

  nn::Tensor fourier_;  // fixed [2, c/2]
  nn::Var mem_type_, mem_absent_;
  nn::Linear pm_lin_a_, pm_lin_b_;
};

}  // namespace hemodet
