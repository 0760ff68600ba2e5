#pragma once

#include <memory>
#include <string>

#include "hemodet/config.hpp"
#include "hemodet/tensor.hpp"

namespace hemodet {

/// Dense displacement field from frame i-1 to i; vectors is [2,H,W] with
/// channel 0 = dx and channel 1 = dy in pixels.
struct FlowField {
  nn::Tensor vectors;
  long height() const { return vectors.dim(1); }
  long width() const { return vectors.dim(2); }
};

/// Pluggable dense-flow source. Implementations hold no trainable parameters
/// (the flow stage is frozen by contract).
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  /// prev/cur are [3,H,W] RGB in [0,1] at the model's working resolution;
  /// clip_id/frame_index give sidecar-based backends their lookup key.
  virtual FlowField estimate(const nn::Tensor& prev, const nn::Tensor& cur,
                             const std::string& clip_id, long frame_index) = 0;
};

/// backend per config: classical (pyramidal Horn-Schunck), injected (uniform
/// field from the clip's flow.json camera path, scaled to the working
/// resolution), external (reads clips/<id>/flow/%06d.flo).
std::unique_ptr<FlowEstimator> make_flow_estimator(const ModelConfig& cfg,
                                                   const std::string& data_root);

/// 3-level coarse-to-fine Horn-Schunck flow; exposed directly for tests.
FlowField classical_flow(const nn::Tensor& prev_rgb, const nn::Tensor& cur_rgb);

struct Offset2 {
  double dx = 0.0, dy = 0.0;
};

/// Background-masked mean of a flow field. mask may be null (all background).
/// mode paper_hw divides by H*W; background_count divides by the number of
/// background pixels (empty background yields (0,0)).
Offset2 mean_background_offset(const FlowField& flow, const nn::Tensor* mask,
                               const std::string& mode);

/// Raw interleaved float32 flow file: float magic 202021.25, int32 width,
/// int32 height, then row-major (dx, dy) pairs.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& flow);

}  // namespace hemodet
