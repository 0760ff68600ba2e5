#include "hemodet/detector.hpp"

#include "hemodet/errors.hpp"

namespace hemodet {

OnlineDetector::OnlineDetector(const ModelConfig& cfg, const std::string& data_root)
    : cfg_(cfg), mask_bank_(cfg.memory_capacity), point_bank_(cfg.memory_capacity) {
  RngStream rng = RngStream(static_cast<uint64_t>(cfg.seed)).split("model-init");
  backbone_ = std::make_unique<Backbone>(params_, cfg, rng);
  mask_ = std::make_unique<MaskBranch>(params_, cfg, rng);
  point_ = std::make_unique<PointBranch>(params_, cfg, rng);
  flow_ = make_flow_estimator(cfg, data_root);
}

void OnlineDetector::reset() {
  mask_bank_.clear();
  point_bank_.clear();
  prev_frame_ = nn::Tensor();
}

FrameResult OnlineDetector::process_frame(const nn::Tensor& image, long frame_index,
                                          const std::string& clip_id,
                                          const FrameOptions& opts) {
  long h = image.dim(1), w = image.dim(2);
  FrameResult res;

  FeaturePyramid fp;
  {
    nn::GradMode::Guard g(opts.mask_grad || opts.point_grad);
    fp = backbone_->encode(image, frame_index);
  }

  FlowField flow;
  if (opts.flow) {
    flow = *opts.flow;
  } else if (prev_frame_.defined()) {
    flow = flow_->estimate(prev_frame_, image, clip_id, frame_index);
  } else {
    flow.vectors = nn::Tensor::zeros({2, h, w});  // first frame of a stream
  }

  nn::Var f_point;
  PointBranch::Decoded decoded;
  {
    nn::GradMode::Guard g(opts.point_grad);
    nn::Var ref = point_->build_reference_features(point_bank_, mask_bank_);
    f_point = point_->attend_memory(fp, ref);
    decoded = point_->decode(f_point, fp.grid_h, fp.grid_w, frame_index,
                             cfg_.existence_threshold);
  }
  res.point_coord = decoded.coord;
  res.point_score = decoded.score;
  res.point = decoded.pred;

  {
    nn::GradMode::Guard g(opts.mask_grad);
    nn::Var f_mask = mask_->attend_memory(fp, mask_bank_);
    auto [edge, gated] = mask_->edge_generate(f_mask, fp.grid_h, fp.grid_w, fp.f1, fp.f2);
    auto [e_p, p_p] =
        mask_->encode_prompts(edge, res.point.has_point, res.point.x, res.point.y);
    res.edge_logits = edge;
    res.mask_logits =
        mask_->decode_mask(gated, fp.grid_h, fp.grid_w, e_p, p_p, fp.f1, fp.f2, h, w);
  }

  res.mask_binary = nn::Tensor({h, w});
  {
    const nn::Tensor& logits = res.mask_logits.value();
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        res.mask_binary.at(y, x) = logits.at(0, y, x) > 0.0 ? 1.0 : 0.0;
  }

  const nn::Tensor* offset_mask = opts.teacher_mask ? opts.teacher_mask : &res.mask_binary;
  res.offset = mean_background_offset(flow, offset_mask, cfg_.offset_normalization);

  {
    nn::GradMode::Guard g(opts.mask_grad);
    nn::Var mm = mask_->encode_memory(fp.tokens, res.mask_binary, fp.grid_h, fp.grid_w);
    mask_bank_.push({mm, res.mask_binary, frame_index});
  }
  {
    nn::GradMode::Guard g(opts.point_grad);
    nn::Var mp = point_->encode_memory(f_point, res.point);
    point_bank_.push({mp, res.offset, frame_index});
  }

  prev_frame_ = image.clone();
  return res;
}

}  // namespace hemodet
