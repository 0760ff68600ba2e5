#include "hemodet/point_branch.hpp"

#include "hemodet/errors.hpp"

namespace hemodet {

void PointMemoryBank::push(PointMemoryEntry entry) {
  if (!entries_.empty() && entry.frame_index <= entries_.back().frame_index)
    throw Error("memory bank: frame indices must be strictly increasing");
  entries_.push_back(std::move(entry));
  while (static_cast<long>(entries_.size()) > capacity_) entries_.pop_front();
}

PointBranch::PointBranch(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng)
    : c_(cfg.channels_coarse) {
  long c = c_;
  mem_self_ = nn::SelfAttnBlock(ps, "pointbranch.mem_self", c, 4, 2 * c, rng);
  mem_cross_ = nn::CrossAttnBlock(ps, "pointbranch.mem_cross", c, 4, 2 * c, rng);
  offset_mlp_ = nn::Mlp(ps, "pointbranch.offset_mlp", 2, c, c, rng);

  out_token_ = ps.add("pointbranch.out_token", nn::xavier_init({1, c}, c, c, rng));
  prompt_tokens_ = ps.add("pointbranch.prompt_tokens", nn::xavier_init({4, c}, c, c, rng));
  for (int i = 0; i < 2; ++i)
    dec_blocks_.emplace_back(ps, "pointbranch.dec" + std::to_string(i), c, 4, 2 * c, rng);
  dec_final_ = nn::MultiHeadAttention(ps, "pointbranch.dec_final", c, 4, rng);
  dec_final_ln_ = nn::LayerNorm(ps, "pointbranch.dec_final_ln", c);
  coord_head_ = nn::Mlp(ps, "pointbranch.coord_head", c, c, 2, rng);
  score_head_ = nn::Mlp(ps, "pointbranch.score_head", c, c, 1, rng);

  fourier_ = fourier_matrix(c / 2, rng.split("point-fourier"));
  mem_type_ = ps.add("pointbranch.mem_type", nn::Tensor::zeros({1, c}));
  mem_absent_ = ps.add("pointbranch.mem_absent", nn::xavier_init({1, c}, c, c, rng));
  pm_lin_a_ = nn::Linear(ps, "pointbranch.pm_lin_a", c, c, rng);
  pm_lin_b_ = nn::Linear(ps, "pointbranch.pm_lin_b", c, c, rng);
}

nn::Var PointBranch::build_reference_features(const PointMemoryBank& bank,
                                              const MaskMemoryBank& mask_bank) const {
  if (bank.size() == 0) return {};
  std::vector<nn::Var> parts;
  for (const PointMemoryEntry& e : bank.entries()) {
    nn::Tensor off({1, 2});
    off.at(0, 0) = e.offset.dx;
    off.at(0, 1) = e.offset.dy;
    nn::Var emb = nn::reshape(offset_mlp_(nn::constant(off)), {c_});
    parts.push_back(nn::add_bias_rows(e.memory, emb));

    for (const MaskMemoryEntry& me : mask_bank.entries())
      if (me.frame_index == e.frame_index) {
        parts.push_back(nn::detach(me.memory));
        break;
      }
  }
  return nn::concat_rows(parts);
}

nn::Var PointBranch::attend_memory(const FeaturePyramid& fp, const nn::Var& reference) const {
  nn::Var x = mem_self_(fp.tokens);
  if (!reference.defined()) return x;
  if (reference.value().dim(1) != c_)
    throw Error("attend_memory: reference width does not match frame features");
  return mem_cross_(x, reference);
}

PointBranch::Decoded PointBranch::decode(const nn::Var& f_point, long grid_h, long grid_w,
                                         long frame_index, double existence_threshold) const {
  nn::Var image = f_point;
  nn::Var image_pe = nn::constant(nn::sincos_position_grid(grid_h, grid_w, c_));
  nn::Var tokens = nn::concat_rows({out_token_, prompt_tokens_});
  nn::Var token_pe = tokens;

  for (const auto& blk : dec_blocks_) {
    auto [t, img] = blk(tokens, image, token_pe, image_pe);
    tokens = t;
    image = img;
  }
  nn::Var attended = dec_final_(nn::add(tokens, token_pe), nn::add(image, image_pe), image);
  tokens = dec_final_ln_(nn::add(tokens, attended));

  nn::Var out = nn::slice_rows(tokens, 0, 1);
  Decoded d;
  d.coord = nn::sigmoid(coord_head_(out));
  d.score = nn::sigmoid(score_head_(out));
  d.pred.x = d.coord.value().at(0, 0);
  d.pred.y = d.coord.value().at(0, 1);
  d.pred.score = d.score.value().at(0, 0);
  d.pred.has_point = d.pred.score >= existence_threshold;
  d.pred.frame_index = frame_index;
  return d;
}

nn::Var PointBranch::encode_memory(const nn::Var& f_point, const PointPrediction& pred) const {
  nn::Var emb;
  if (pred.has_point)
    emb = nn::add(nn::constant(fourier_embed(pred.x, pred.y, fourier_)), mem_type_);
  else
    emb = mem_absent_;
  nn::Var fused =
      nn::gelu(nn::add_bias_rows(pm_lin_a_(f_point), nn::reshape(emb, {c_})));
  return pm_lin_b_(fused);
}

}  // namespace hemodet
