#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hemodet/autograd.hpp"
#include "hemodet/rng.hpp"

namespace hemodet::nn {

/// Ordered registry of named trainable leaves. One store backs a whole model;
/// optimizer groups and checkpoints address parameters by name prefix.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var* find(const std::string& name);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> collect(const std::string& prefix) const;
  long total_size() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

// ---- initializers ----
Tensor xavier_init(std::vector<long> shape, long fan_in, long fan_out, RngStream& rng);

// ---- layers (value types holding Vars registered in a ParamStore) ----

struct Linear {
  Var w;  // [in, out]
  Var b;  // [out]
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, long in, long out, RngStream& rng);
  Var operator()(const Var& x) const;  // [n, in] -> [n, out]
};

struct LayerNorm {
  Var gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, long dim);
  Var operator()(const Var& x) const;
};

struct Conv2dLayer {
  Var w;  // [out, in, k, k]
  Var b;  // [out]
  long stride = 1, pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& name, long in, long out, long k,
              long stride, long pad, RngStream& rng);
  Var operator()(const Var& x) const;
};

struct Mlp {  // two-layer feed-forward with GeLU
  Linear fc1, fc2;
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, long in, long hidden, long out,
      RngStream& rng);
  Var operator()(const Var& x) const;
};

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  long heads = 1, dim = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, long dim, long heads,
                     RngStream& rng);
  /// q [nq, d], k/v [nk, d] -> [nq, d]
  Var operator()(const Var& q, const Var& k, const Var& v) const;
};

/// Post-norm transformer block over one token set.
struct SelfAttnBlock {
  MultiHeadAttention attn;
  LayerNorm ln1, ln2;
  Mlp mlp;
  SelfAttnBlock() = default;
  SelfAttnBlock(ParamStore& ps, const std::string& name, long dim, long heads,
                long mlp_hidden, RngStream& rng);
  Var operator()(const Var& x) const;
};

/// Post-norm block whose queries attend to a separate context token set.
struct CrossAttnBlock {
  MultiHeadAttention attn;
  LayerNorm ln1, ln2;
  Mlp mlp;
  CrossAttnBlock() = default;
  CrossAttnBlock(ParamStore& ps, const std::string& name, long dim, long heads,
                 long mlp_hidden, RngStream& rng);
  Var operator()(const Var& q, const Var& kv) const;
};

/// Decoder block updating prompt tokens and image tokens in both directions
/// (token self-attention, token->image, MLP, image->token).
struct TwoWayBlock {
  MultiHeadAttention self_attn, cross_t2i, cross_i2t;
  LayerNorm ln1, ln2, ln3, ln4;
  Mlp mlp;
  TwoWayBlock() = default;
  TwoWayBlock(ParamStore& ps, const std::string& name, long dim, long heads,
              long mlp_hidden, RngStream& rng);
  /// Returns updated (tokens, image). PEs are added to queries/keys only.
  std::pair<Var, Var> operator()(const Var& tokens, const Var& image,
                                 const Var& token_pe, const Var& image_pe) const;
};

/// Fixed (non-trainable) 2-D sine-cosine grid embedding, [h*w, dim],
/// dim divisible by 4.
Tensor sincos_position_grid(long h, long w, long dim);

}  // namespace hemodet::nn
