#include "hemodet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hemodet::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
  Var v = leaf(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

Var* ParamStore::find(const std::string& name) {
  for (auto& [n, v] : items_)
    if (n == name) return &v;
  return nullptr;
}

std::vector<Var> ParamStore::collect(const std::string& prefix) const {
  std::vector<Var> out;
  for (const auto& [n, v] : items_)
    if (n.rfind(prefix, 0) == 0) out.push_back(v);
  return out;
}

long ParamStore::total_size() const {
  long n = 0;
  for (const auto& [name, v] : items_) n += v.value().size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [n, v] : items_) v.zero_grad();
}

Tensor xavier_init(std::vector<long> shape, long fan_in, long fan_out, RngStream& rng) {
  Tensor t(std::move(shape));
  double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
  return t;
}

Linear::Linear(ParamStore& ps, const std::string& name, long in, long out, RngStream& rng) {
  w = ps.add(name + ".weight", xavier_init({in, out}, in, out, rng));
  b = ps.add(name + ".bias", Tensor::zeros({out}));
}

Var Linear::operator()(const Var& x) const { return add_bias_rows(matmul(x, w), b); }

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, long dim) {
  gamma = ps.add(name + ".gamma", Tensor::full({dim}, 1.0));
  beta = ps.add(name + ".beta", Tensor::zeros({dim}));
}

Var LayerNorm::operator()(const Var& x) const { return layer_norm_rows(x, gamma, beta); }

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, long in, long out,
                         long k, long stride_, long pad_, RngStream& rng)
    : stride(stride_), pad(pad_) {
  long fan_in = in * k * k;
  w = ps.add(name + ".weight", xavier_init({out, in, k, k}, fan_in, out * k * k, rng));
  b = ps.add(name + ".bias", Tensor::zeros({out}));
}

Var Conv2dLayer::operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }

Mlp::Mlp(ParamStore& ps, const std::string& name, long in, long hidden, long out,
         RngStream& rng)
    : fc1(ps, name + ".fc1", in, hidden, rng), fc2(ps, name + ".fc2", hidden, out, rng) {}

Var Mlp::operator()(const Var& x) const { return fc2(gelu(fc1(x))); }

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& name, long dim_,
                                       long heads_, RngStream& rng)
    : q_proj(ps, name + ".q", dim_, dim_, rng),
      k_proj(ps, name + ".k", dim_, dim_, rng),
      v_proj(ps, name + ".v", dim_, dim_, rng),
      out_proj(ps, name + ".out", dim_, dim_, rng),
      heads(heads_),
      dim(dim_) {
  if (dim_ % heads_ != 0) throw std::logic_error("attention dim not divisible by heads");
}

Var MultiHeadAttention::operator()(const Var& q_in, const Var& k_in, const Var& v_in) const {
  Var q = q_proj(q_in), k = k_proj(k_in), v = v_proj(v_in);
  long hd = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (long h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * hd, (h + 1) * hd);
    Var kh = slice_cols(k, h * hd, (h + 1) * hd);
    Var vh = slice_cols(v, h * hd, (h + 1) * hd);
    Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(attn, vh));
  }
  return out_proj(heads == 1 ? outs[0] : concat_cols(outs));
}

SelfAttnBlock::SelfAttnBlock(ParamStore& ps, const std::string& name, long dim, long heads,
                             long mlp_hidden, RngStream& rng)
    : attn(ps, name + ".attn", dim, heads, rng),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      mlp(ps, name + ".mlp", dim, mlp_hidden, dim, rng) {}

Var SelfAttnBlock::operator()(const Var& x) const {
  Var h = ln1(add(x, attn(x, x, x)));
  return ln2(add(h, mlp(h)));
}

CrossAttnBlock::CrossAttnBlock(ParamStore& ps, const std::string& name, long dim, long heads,
                               long mlp_hidden, RngStream& rng)
    : attn(ps, name + ".attn", dim, heads, rng),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      mlp(ps, name + ".mlp", dim, mlp_hidden, dim, rng) {}

Var CrossAttnBlock::operator()(const Var& q, const Var& kv) const {
  Var h = ln1(add(q, attn(q, kv, kv)));
  return ln2(add(h, mlp(h)));
}

TwoWayBlock::TwoWayBlock(ParamStore& ps, const std::string& name, long dim, long heads,
                         long mlp_hidden, RngStream& rng)
    : self_attn(ps, name + ".self", dim, heads, rng),
      cross_t2i(ps, name + ".t2i", dim, heads, rng),
      cross_i2t(ps, name + ".i2t", dim, heads, rng),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      ln3(ps, name + ".ln3", dim),
      ln4(ps, name + ".ln4", dim),
      mlp(ps, name + ".mlp", dim, mlp_hidden, dim, rng) {}

std::pair<Var, Var> TwoWayBlock::operator()(const Var& tokens, const Var& image,
                                            const Var& token_pe, const Var& image_pe) const {
  Var tq = add(tokens, token_pe);
  Var t = ln1(add(tokens, self_attn(tq, tq, tokens)));

  tq = add(t, token_pe);
  Var iq = add(image, image_pe);
  t = ln2(add(t, cross_t2i(tq, iq, image)));

  t = ln3(add(t, mlp(t)));

  tq = add(t, token_pe);
  Var img = ln4(add(image, cross_i2t(iq, tq, t)));
  return {t, img};
}

Tensor sincos_position_grid(long h, long w, long dim) {
  if (dim % 4 != 0) throw std::logic_error("position grid dim must be divisible by 4");
  long quarter = dim / 4;
  Tensor out({h * w, dim});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double* row = out.data() + (y * w + x) * dim;
      for (long i = 0; i < quarter; ++i) {
        double omega = std::pow(10000.0, -static_cast<double>(i) / quarter);
        row[i] = std::sin(y * omega);
        row[quarter + i] = std::cos(y * omega);
        row[2 * quarter + i] = std::sin(x * omega);
        row[3 * quarter + i] = std::cos(x * omega);
      }
    }
  return out;
}

}  // namespace hemodet::nn
