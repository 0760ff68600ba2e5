#pragma once

#include <memory>
#include <string>

#include "hemodet/backbone.hpp"
#include "hemodet/config.hpp"
#include "hemodet/flow.hpp"
#include "hemodet/mask_branch.hpp"
#include "hemodet/point_branch.hpp"

namespace hemodet {

/// Per-call switches for process_frame. Gradient recording is scoped per
/// branch so the alternating trainer can freeze one side; the encoder records
/// whenever either branch does. teacher_mask (working-resolution binary)
/// replaces the predicted mask in the Eq.-5 background masking when set.
struct FrameOptions {
  bool mask_grad = false;
  bool point_grad = false;
  const nn::Tensor* teacher_mask = nullptr;
  const FlowField* flow = nullptr;  // precomputed flow; skips the estimator
};

struct FrameResult {
  nn::Var mask_logits;     // [1, H, W]
  nn::Tensor mask_binary;  // [H, W], sigmoid(logits) > 0.5
  nn::Var edge_logits;     // [1, H/4, W/4]
  nn::Var point_coord;     // [1, 2]
  nn::Var point_score;     // [1, 1]
  PointPrediction point;
  Offset2 offset;  // Eq.-5 mean background offset for this frame
};

/// Streaming dual-branch detector. Owns the parameter store, both branches,
/// the memory banks and the flow backend; call process_frame once per frame
/// in order, and reset() at every clip boundary.
class OnlineDetector {
 public:
  OnlineDetector(const ModelConfig& cfg, const std::string& data_root);

  /// Clears both banks and the previous-frame cache (clip boundary).
  void reset();

  FrameResult process_frame(const nn::Tensor& image, long frame_index,
                            const std::string& clip_id, const FrameOptions& opts = {});

  nn::ParamStore& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }
  Backbone& backbone() { return *backbone_; }
  MaskBranch& mask_branch() { return *mask_; }
  PointBranch& point_branch() { return *point_; }
  const MaskMemoryBank& mask_bank() const { return mask_bank_; }
  const PointMemoryBank& point_bank() const { return point_bank_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<MaskBranch> mask_;
  std::unique_ptr<PointBranch> point_;
  std::unique_ptr<FlowEstimator> flow_;
  MaskMemoryBank mask_bank_;
  PointMemoryBank point_bank_;
  nn::Tensor prev_frame_;
};

}  // namespace hemodet
