#include "hemodet/mask_branch.hpp"

#include <algorithm>
#include <cmath>

#include "hemodet/errors.hpp"

namespace hemodet {

void MaskMemoryBank::push(MaskMemoryEntry entry) {
  if (!entries_.empty() && entry.frame_index <= entries_.back().frame_index)
    throw Error("memory bank: frame indices must be strictly increasing");
  entries_.push_back(std::move(entry));
  while (static_cast<long>(entries_.size()) > capacity_) entries_.pop_front();
}

nn::Tensor fourier_matrix(long dim_half, RngStream rng) {
  nn::Tensor b({2, dim_half});
  for (long i = 0; i < b.size(); ++i) b[i] = rng.normal();
  return b;
}

nn::Tensor fourier_embed(double px, double py, const nn::Tensor& b) {
  long dh = b.dim(1);
  nn::Tensor row({1, 2 * dh});
  for (long j = 0; j < dh; ++j) {
    double ang = 2.0 * M_PI * (px * b.at(0, j) + py * b.at(1, j));
    row.at(0, j) = std::sin(ang);
    row.at(0, dh + j) = std::cos(ang);
  }
  return row;
}

MaskBranch::MaskBranch(nn::ParamStore& ps, const ModelConfig& cfg, RngStream& rng)
    : c_(cfg.channels_coarse),
      c1_(cfg.channels_quarter),
      c2_(cfg.channels_eighth),
      gabor_(make_gabor_bank(cfg.gabor)) {
  long c = c_, c1 = c1_, c2 = c2_;

  mem_self_ = nn::SelfAttnBlock(ps, "maskbranch.mem_self", c, 4, 2 * c, rng);
  mem_cross_ = nn::CrossAttnBlock(ps, "maskbranch.mem_cross", c, 4, 2 * c, rng);
  age_embed_ = ps.add("maskbranch.age_embed", nn::Tensor::zeros({cfg.memory_capacity, c}));

  eg_proj_a_ = nn::Conv2dLayer(ps, "maskbranch.eg_proj_a", c, c2, 1, 1, 0, rng);
  eg_skip2_ = nn::Conv2dLayer(ps, "maskbranch.eg_skip2", c2, c2, 1, 1, 0, rng);
  eg_proj_b_ = nn::Conv2dLayer(ps, "maskbranch.eg_proj_b", c2, c1, 1, 1, 0, rng);
  eg_skip1_ = nn::Conv2dLayer(ps, "maskbranch.eg_skip1", c1, c1, 1, 1, 0, rng);
  eg_out_ = nn::Conv2dLayer(ps, "maskbranch.eg_out", c1, 1, 1, 1, 0, rng);

  pconv1_ = nn::Conv2dLayer(ps, "maskbranch.pconv1", 1, c / 8, 2, 2, 0, rng);
  pconv2_ = nn::Conv2dLayer(ps, "maskbranch.pconv2", c / 8, c / 4, 2, 2, 0, rng);
  pconv3_ = nn::Conv2dLayer(ps, "maskbranch.pconv3", c / 4, c, 1, 1, 0, rng);
  pln1_ = nn::LayerNorm(ps, "maskbranch.pln1", c / 8);
  pln2_ = nn::LayerNorm(ps, "maskbranch.pln2", c / 4);
  fourier_ = fourier_matrix(c / 2, rng.split("prompt-fourier"));
  point_type_ = ps.add("maskbranch.point_type", nn::Tensor::zeros({1, c}));
  no_point_ = ps.add("maskbranch.no_point", nn::xavier_init({1, c}, c, c, rng));

  mask_token_ = ps.add("maskbranch.mask_token", nn::xavier_init({1, c}, c, c, rng));
  for (int i = 0; i < 2; ++i)
    dec_blocks_.emplace_back(ps, "maskbranch.dec" + std::to_string(i), c, 4, 2 * c, rng);
  dec_final_ = nn::MultiHeadAttention(ps, "maskbranch.dec_final", c, 4, rng);
  dec_final_ln_ = nn::LayerNorm(ps, "maskbranch.dec_final_ln", c);
  up_a_ = nn::Conv2dLayer(ps, "maskbranch.up_a", c, c2, 3, 1, 1, rng);
  up_skip2_ = nn::Conv2dLayer(ps, "maskbranch.up_skip2", c2, c2, 1, 1, 0, rng);
  up_b_ = nn::Conv2dLayer(ps, "maskbranch.up_b", c2, c1, 3, 1, 1, rng);
  up_skip1_ = nn::Conv2dLayer(ps, "maskbranch.up_skip1", c1, c1, 1, 1, 0, rng);
  up_out_ = nn::Conv2dLayer(ps, "maskbranch.up_out", c1, c / 8, 3, 1, 1, rng);
  hyper_ = nn::Mlp(ps, "maskbranch.hyper", c, c, c / 8, rng);

  mem_mask_conv_ = nn::Conv2dLayer(ps, "maskbranch.mem_mask_conv", 1, c, 1, 1, 0, rng);
  mem_lin_a_ = nn::Linear(ps, "maskbranch.mem_lin_a", c, c, rng);
  mem_lin_b_ = nn::Linear(ps, "maskbranch.mem_lin_b", c, c, rng);
}

nn::Var MaskBranch::attend_memory(const FeaturePyramid& fp, const MaskMemoryBank& bank) const {
  nn::Var x = mem_self_(fp.tokens);
  if (bank.size() == 0) return x;

  std::vector<nn::Var> mems;
  mems.reserve(bank.size());
  for (const MaskMemoryEntry& e : bank.entries()) {
    if (e.memory.value().dim(1) != c_)
      throw Error("attend_memory: stored memory width does not match frame features");
    long age = std::clamp(fp.frame_index - e.frame_index, 1L, age_embed_.value().dim(0));
    nn::Var row = nn::reshape(nn::slice_rows(age_embed_, age - 1, age), {c_});
    mems.push_back(nn::add_bias_rows(e.memory, row));
  }
  return mem_cross_(x, nn::concat_rows(mems));
}

std::pair<nn::Var, nn::Var> MaskBranch::edge_generate(const nn::Var& f_mask, long grid_h,
                                                      long grid_w, const nn::Var& f1,
                                                      const nn::Var& f2) const {
  nn::Var grid = nn::tokens_to_chw(f_mask, c_, grid_h, grid_w);
  nn::Var gated = nn::mul(nn::relu(grid), lg_filter(grid, gabor_));

  nn::Var x = lg_filter(nn::upsample_nearest2(gated), gabor_);
  x = nn::gelu(nn::add(eg_proj_a_(x), eg_skip2_(f2)));
  x = lg_filter(nn::upsample_nearest2(x), gabor_);
  x = nn::gelu(nn::add(eg_proj_b_(x), eg_skip1_(f1)));
  nn::Var edge = eg_out_(x);  // [1, H/4, W/4]

  return {edge, nn::chw_to_tokens(gated)};
}

nn::Var MaskBranch::point_prompt_token(bool has_point, double px, double py) const {
  if (!has_point) return no_point_;
  nn::Var emb = nn::constant(fourier_embed(px, py, fourier_));
  return nn::add(emb, point_type_);
}

std::pair<nn::Var, nn::Var> MaskBranch::encode_prompts(const nn::Var& edge_logits,
                                                       bool has_point, double px,
                                                       double py) const {
  auto ln_tokens = [](const nn::Var& x, const nn::LayerNorm& ln) {
    long ch = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
    return nn::tokens_to_chw(ln(nn::chw_to_tokens(x)), ch, h, w);
  };
  nn::Var e = ln_tokens(nn::gelu(pconv1_(edge_logits)), pln1_);
  e = ln_tokens(nn::gelu(pconv2_(e)), pln2_);
  nn::Var e_p = nn::chw_to_tokens(pconv3_(e));  // [s, c]
  return {e_p, point_prompt_token(has_point, px, py)};
}

nn::Var MaskBranch::decode_mask(const nn::Var& gated_tokens, long grid_h, long grid_w,
                                const nn::Var& edge_prompt, const nn::Var& point_prompt,
                                const nn::Var& f1, const nn::Var& f2, long out_h,
                                long out_w) const {
  nn::Var image = nn::add(gated_tokens, edge_prompt);
  nn::Var image_pe = nn::constant(nn::sincos_position_grid(grid_h, grid_w, c_));
  nn::Var tokens = nn::concat_rows({mask_token_, point_prompt});
  nn::Var token_pe = tokens;

  for (const auto& blk : dec_blocks_) {
    auto [t, img] = blk(tokens, image, token_pe, image_pe);
    tokens = t;
    image = img;
  }
  nn::Var attended = dec_final_(nn::add(tokens, token_pe), nn::add(image, image_pe), image);
  tokens = dec_final_ln_(nn::add(tokens, attended));

  nn::Var x = nn::tokens_to_chw(image, c_, grid_h, grid_w);
  x = nn::gelu(nn::add(up_a_(nn::upsample_nearest2(x)), up_skip2_(f2)));
  x = nn::gelu(nn::add(up_b_(nn::upsample_nearest2(x)), up_skip1_(f1)));
  x = up_out_(x);  // [c/8, H/4, W/4]

  nn::Var hyper = hyper_(nn::slice_rows(tokens, 0, 1));          // [1, c/8]
  nn::Var pix = nn::chw_to_tokens(x);                            // [npix, c/8]
  nn::Var logits = nn::matmul(pix, nn::transpose(hyper));        // [npix, 1]
  logits = nn::reshape(logits, {1, grid_h * 4, grid_w * 4});
  return nn::resize_bilinear(logits, out_h, out_w);
}

nn::Var MaskBranch::encode_memory(const nn::Var& frame_tokens, const nn::Tensor& mask_binary,
                                  long grid_h, long grid_w) const {
  nn::Tensor small = nn::resize_nearest_plain(mask_binary, grid_h, grid_w);
  nn::Var mask_tok =
      nn::chw_to_tokens(mem_mask_conv_(nn::constant(small.reshaped({1, grid_h, grid_w}))));
  nn::Var fused = nn::gelu(nn::add(mem_lin_a_(frame_tokens), mask_tok));
  return mem_lin_b_(fused);
}

}  // namespace hemodet
