#include "hemodet/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hemodet::nn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

Tensor& Var::grad() { return n_->grad; }

void Var::accum_grad(const Tensor& g) {
  if (!n_->requires_grad) return;
  if (!n_->grad.defined()) n_->grad = Tensor::zeros(n_->value.shape());
  n_->grad.add_(g);
}

void Var::zero_grad() {
  if (n_ && n_->grad.defined()) n_->grad.fill(0.0);
}

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return Var(std::move(n));
}

Var leaf(Tensor v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  if (g_grad_enabled)
    for (const Var& p : parents)
      if (p.requires_grad()) rg = true;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  check(root.defined() && root.value().size() == 1, "backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS over requires-grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].node().get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad = Tensor::full(root.value().shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.defined()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor out = a.value().clone();
  out.add_(b.value());
  return make_op(std::move(out), {a, b}, [](Node& n) {
    n.parents[0].accum_grad(n.grad);
    n.parents[1].accum_grad(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor out = a.value().clone();
  out.add_scaled_(b.value(), -1.0);
  return make_op(std::move(out), {a, b}, [](Node& n) {
    n.parents[0].accum_grad(n.grad);
    Tensor g = n.grad.clone();
    for (long i = 0; i < g.size(); ++i) g[i] = -g[i];
    n.parents[1].accum_grad(g);
  });
}

Var mul(const Var& a, const Var& b) {
  check(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor out(a.value().shape());
  long nels = out.size();
  for (long i = 0; i < nels; ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0].value();
    const Tensor& bv = n.parents[1].value();
    Tensor ga(av.shape()), gb(bv.shape());
    for (long i = 0; i < n.grad.size(); ++i) {
      ga[i] = n.grad[i] * bv[i];
      gb[i] = n.grad[i] * av[i];
    }
    n.parents[0].accum_grad(ga);
    n.parents[1].accum_grad(gb);
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value().clone();
  for (long i = 0; i < out.size(); ++i) out[i] *= s;
  return make_op(std::move(out), {a}, [s](Node& n) {
    Tensor g = n.grad.clone();
    for (long i = 0; i < g.size(); ++i) g[i] *= s;
    n.parents[0].accum_grad(g);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value().clone();
  for (long i = 0; i < out.size(); ++i) out[i] += s;
  return make_op(std::move(out), {a}, [](Node& n) { n.parents[0].accum_grad(n.grad); });
}

Var relu(const Var& a) {
  Tensor out = a.value().clone();
  for (long i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return make_op(std::move(out), {a}, [](Node& n) {
    const Tensor& av = n.parents[0].value();
    Tensor g(av.shape());
    for (long i = 0; i < g.size(); ++i) g[i] = av[i] > 0.0 ? n.grad[i] : 0.0;
    n.parents[0].accum_grad(g);
  });
}

Var gelu(const Var& a) {
  Tensor out(a.value().shape());
  for (long i = 0; i < out.size(); ++i) {
    double x = a.value()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return make_op(std::move(out), {a}, [](Node& n) {
    const Tensor& av = n.parents[0].value();
    Tensor g(av.shape());
    for (long i = 0; i < g.size(); ++i) {
      double x = av[i];
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g[i] = n.grad[i] * (cdf + x * pdf);
    }
    n.parents[0].accum_grad(g);
  });
}

Var sigmoid(const Var& a) {
  Tensor out(a.value().shape());
  for (long i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  Tensor saved = out;
  return make_op(std::move(out), {a}, [saved](Node& n) {
    Tensor g(saved.shape());
    for (long i = 0; i < g.size(); ++i) g[i] = n.grad[i] * saved[i] * (1.0 - saved[i]);
    n.parents[0].accum_grad(g);
  });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, std::vector<long> shape) {
  Tensor out = a.value().clone().reshaped(shape);
  return make_op(std::move(out), {a}, [](Node& n) {
    n.parents[0].accum_grad(n.grad.reshaped(n.parents[0].value().shape()));
  });
}

Var slice_rows(const Var& a, long from, long to) {
  check(a.value().ndim() == 2, "slice_rows: need 2-D");
  long c = a.value().dim(1);
  check(0 <= from && from <= to && to <= a.value().dim(0), "slice_rows: bad range");
  Tensor out({to - from, c});
  std::copy(a.value().data() + from * c, a.value().data() + to * c, out.data());
  return make_op(std::move(out), {a}, [from, c](Node& n) {
    Tensor g(n.parents[0].value().shape());
    std::copy(n.grad.data(), n.grad.data() + n.grad.size(), g.data() + from * c);
    n.parents[0].accum_grad(g);
  });
}

Var slice_cols(const Var& a, long from, long to) {
  check(a.value().ndim() == 2, "slice_cols: need 2-D");
  long r = a.value().dim(0), c = a.value().dim(1);
  check(0 <= from && from <= to && to <= c, "slice_cols: bad range");
  long w = to - from;
  Tensor out({r, w});
  for (long i = 0; i < r; ++i)
    std::copy(a.value().data() + i * c + from, a.value().data() + i * c + to,
              out.data() + i * w);
  return make_op(std::move(out), {a}, [from, c, w](Node& n) {
    long r = n.parents[0].value().dim(0);
    Tensor g(n.parents[0].value().shape());
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < w; ++j) g.at(i, from + j) = n.grad.at(i, j);
    n.parents[0].accum_grad(g);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_rows: empty");
  long c = parts[0].value().dim(1);
  long rows = 0;
  for (const Var& p : parts) {
    check(p.value().ndim() == 2 && p.value().dim(1) == c, "concat_rows: shape mismatch");
    rows += p.value().dim(0);
  }
  Tensor out({rows, c});
  long off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return make_op(std::move(out), parts, [](Node& n) {
    long off = 0;
    for (Var& p : n.parents) {
      long sz = p.value().size();
      Tensor g(p.value().shape());
      std::copy(n.grad.data() + off, n.grad.data() + off + sz, g.data());
      p.accum_grad(g);
      off += sz;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  long r = parts[0].value().dim(0);
  long cols = 0;
  for (const Var& p : parts) {
    check(p.value().ndim() == 2 && p.value().dim(0) == r, "concat_cols: shape mismatch");
    cols += p.value().dim(1);
  }
  Tensor out({r, cols});
  long off = 0;
  for (const Var& p : parts) {
    long w = p.value().dim(1);
    for (long i = 0; i < r; ++i)
      std::copy(p.value().data() + i * w, p.value().data() + (i + 1) * w,
                out.data() + i * cols + off);
    off += w;
  }
  return make_op(std::move(out), parts, [cols](Node& n) {
    long r = n.grad.dim(0);
    long off = 0;
    for (Var& p : n.parents) {
      long w = p.value().dim(1);
      Tensor g(p.value().shape());
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < w; ++j) g.at(i, j) = n.grad[i * cols + off + j];
      p.accum_grad(g);
      off += w;
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  long m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  CMapMat A(a.data(), m, k), B(b.data(), k, n);
  MapMat C(out.data(), m, n);
  C.noalias() = A * B;
  return out;
}

Var matmul(const Var& a, const Var& b) {
  check(a.value().ndim() == 2 && b.value().ndim() == 2 && a.value().dim(1) == b.value().dim(0),
        "matmul: shape mismatch");
  return make_op(matmul_plain(a.value(), b.value()), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0].value();
    const Tensor& bv = n.parents[1].value();
    long m = av.dim(0), k = av.dim(1), c = bv.dim(1);
    CMapMat A(av.data(), m, k), B(bv.data(), k, c), G(n.grad.data(), m, c);
    if (n.parents[0].requires_grad()) {
      Tensor ga({m, k});
      MapMat(ga.data(), m, k).noalias() = G * B.transpose();
      n.parents[0].accum_grad(ga);
    }
    if (n.parents[1].requires_grad()) {
      Tensor gb({k, c});
      MapMat(gb.data(), k, c).noalias() = A.transpose() * G;
      n.parents[1].accum_grad(gb);
    }
  });
}

Var transpose(const Var& a) {
  check(a.value().ndim() == 2, "transpose: need 2-D");
  long m = a.value().dim(0), c = a.value().dim(1);
  Tensor out({c, m});
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  return make_op(std::move(out), {a}, [m, c](Node& n) {
    Tensor g({m, c});
    for (long i = 0; i < m; ++i)
      for (long j = 0; j < c; ++j) g.at(i, j) = n.grad.at(j, i);
    n.parents[0].accum_grad(g);
  });
}

Var add_bias_rows(const Var& x, const Var& b) {
  check(x.value().ndim() == 2 && b.value().ndim() == 1 && x.value().dim(1) == b.value().dim(0),
        "add_bias_rows: shape mismatch");
  long r = x.value().dim(0), c = x.value().dim(1);
  Tensor out = x.value().clone();
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) out.at(i, j) += b.value()[j];
  return make_op(std::move(out), {x, b}, [r, c](Node& n) {
    n.parents[0].accum_grad(n.grad);
    if (n.parents[1].requires_grad()) {
      Tensor gb({c});
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) gb[j] += n.grad.at(i, j);
      n.parents[1].accum_grad(gb);
    }
  });
}

Var softmax_rows(const Var& a) {
  check(a.value().ndim() == 2, "softmax_rows: need 2-D");
  long r = a.value().dim(0), c = a.value().dim(1);
  Tensor out({r, c});
  for (long i = 0; i < r; ++i) {
    double m = -1e300;
    for (long j = 0; j < c; ++j) m = std::max(m, a.value().at(i, j));
    double s = 0.0;
    for (long j = 0; j < c; ++j) {
      double e = std::exp(a.value().at(i, j) - m);
      out.at(i, j) = e;
      s += e;
    }
    for (long j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  Tensor saved = out;
  return make_op(std::move(out), {a}, [saved, r, c](Node& n) {
    Tensor g({r, c});
    for (long i = 0; i < r; ++i) {
      double dot = 0.0;
      for (long j = 0; j < c; ++j) dot += n.grad.at(i, j) * saved.at(i, j);
      for (long j = 0; j < c; ++j)
        g.at(i, j) = saved.at(i, j) * (n.grad.at(i, j) - dot);
    }
    n.parents[0].accum_grad(g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check(x.value().ndim() == 2, "layer_norm_rows: need 2-D");
  long r = x.value().dim(0), c = x.value().dim(1);
  check(gamma.value().size() == c && beta.value().size() == c, "layer_norm_rows: affine size");
  Tensor out({r, c});
  Tensor xhat({r, c});
  Tensor inv_std({r});
  for (long i = 0; i < r; ++i) {
    double mu = 0.0;
    for (long j = 0; j < c; ++j) mu += x.value().at(i, j);
    mu /= c;
    double var = 0.0;
    for (long j = 0; j < c; ++j) {
      double d = x.value().at(i, j) - mu;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (long j = 0; j < c; ++j) {
      double h = (x.value().at(i, j) - mu) * is;
      xhat.at(i, j) = h;
      out.at(i, j) = gamma.value()[j] * h + beta.value()[j];
    }
  }
  return make_op(std::move(out), {x, gamma, beta}, [xhat, inv_std, r, c](Node& n) {
    const Tensor& gam = n.parents[1].value();
    if (n.parents[0].requires_grad()) {
      Tensor gx({r, c});
      for (long i = 0; i < r; ++i) {
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (long j = 0; j < c; ++j) {
          double dh = n.grad.at(i, j) * gam[j];
          sum_dh += dh;
          sum_dh_h += dh * xhat.at(i, j);
        }
        for (long j = 0; j < c; ++j) {
          double dh = n.grad.at(i, j) * gam[j];
          gx.at(i, j) = inv_std[i] * (dh - sum_dh / c - xhat.at(i, j) * sum_dh_h / c);
        }
      }
      n.parents[0].accum_grad(gx);
    }
    if (n.parents[1].requires_grad()) {
      Tensor gg({c});
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) gg[j] += n.grad.at(i, j) * xhat.at(i, j);
      n.parents[1].accum_grad(gg);
    }
    if (n.parents[2].requires_grad()) {
      Tensor gb({c});
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) gb[j] += n.grad.at(i, j);
      n.parents[2].accum_grad(gb);
    }
  });
}

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a.value().sum());
  return make_op(std::move(out), {a}, [](Node& n) {
    Tensor g = Tensor::full(n.parents[0].value().shape(), n.grad[0]);
    n.parents[0].accum_grad(g);
  });
}

Var mean(const Var& a) {
  long sz = a.value().size();
  Tensor out = Tensor::scalar(a.value().sum() / sz);
  return make_op(std::move(out), {a}, [sz](Node& n) {
    Tensor g = Tensor::full(n.parents[0].value().shape(), n.grad[0] / sz);
    n.parents[0].accum_grad(g);
  });
}

// ---------------------------------------------------------------------------
// spatial
// ---------------------------------------------------------------------------

namespace {

Tensor im2col(const Tensor& x, long kh, long kw, long stride, long pad, long oh, long ow) {
  long ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor cols({oh * ow, ci * kh * kw});
  for (long oy = 0; oy < oh; ++oy)
    for (long ox = 0; ox < ow; ++ox) {
      double* row = cols.data() + (oy * ow + ox) * ci * kh * kw;
      for (long c = 0; c < ci; ++c)
        for (long u = 0; u < kh; ++u) {
          long iy = oy * stride + u - pad;
          for (long v = 0; v < kw; ++v) {
            long ix = ox * stride + v - pad;
            double val = 0.0;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) val = x.at(c, iy, ix);
            row[(c * kh + u) * kw + v] = val;
          }
        }
    }
  return cols;
}

void col2im_accum(const Tensor& dcols, Tensor& dx, long kh, long kw, long stride, long pad,
                  long oh, long ow) {
  long ci = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  for (long oy = 0; oy < oh; ++oy)
    for (long ox = 0; ox < ow; ++ox) {
      const double* row = dcols.data() + (oy * ow + ox) * ci * kh * kw;
      for (long c = 0; c < ci; ++c)
        for (long u = 0; u < kh; ++u) {
          long iy = oy * stride + u - pad;
          if (iy < 0 || iy >= h) continue;
          for (long v = 0; v < kw; ++v) {
            long ix = ox * stride + v - pad;
            if (ix < 0 || ix >= w) continue;
            dx.at(c, iy, ix) += row[(c * kh + u) * kw + v];
          }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, long stride, long pad) {
  check(x.value().ndim() == 3 && w.value().ndim() == 4, "conv2d: bad ranks");
  long ci = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
  long co = w.value().dim(0), kh = w.value().dim(2), kw = w.value().dim(3);
  check(w.value().dim(1) == ci, "conv2d: channel mismatch");
  check(b.value().size() == co, "conv2d: bias size");
  long oh = (h + 2 * pad - kh) / stride + 1;
  long ow = (wd + 2 * pad - kw) / stride + 1;
  check(oh > 0 && ow > 0, "conv2d: empty output");

  Tensor cols = im2col(x.value(), kh, kw, stride, pad, oh, ow);
  long kk = ci * kh * kw;
  Tensor out2({oh * ow, co});
  {
    CMapMat C(cols.data(), oh * ow, kk), W(w.value().data(), co, kk);
    MapMat O(out2.data(), oh * ow, co);
    O.noalias() = C * W.transpose();
  }
  Tensor out({co, oh, ow});
  for (long p = 0; p < oh * ow; ++p)
    for (long c = 0; c < co; ++c) out[c * oh * ow + p] = out2[p * co + c] + b.value()[c];

  return make_op(std::move(out), {x, w, b},
                 [cols, stride, pad, kh, kw, oh, ow, co, ci, kk](Node& n) {
    Tensor dout2({oh * ow, co});
    for (long p = 0; p < oh * ow; ++p)
      for (long c = 0; c < co; ++c) dout2[p * co + c] = n.grad[c * oh * ow + p];
    CMapMat G(dout2.data(), oh * ow, co), C(cols.data(), oh * ow, kk);
    if (n.parents[1].requires_grad()) {
      Tensor gw({co, ci, kh, kw});
      MapMat(gw.data(), co, kk).noalias() = G.transpose() * C;
      n.parents[1].accum_grad(gw);
    }
    if (n.parents[2].requires_grad()) {
      Tensor gb({co});
      for (long p = 0; p < oh * ow; ++p)
        for (long c = 0; c < co; ++c) gb[c] += dout2[p * co + c];
      n.parents[2].accum_grad(gb);
    }
    if (n.parents[0].requires_grad()) {
      const Tensor& wv = n.parents[1].value();
      Tensor dcols({oh * ow, kk});
      CMapMat W(wv.data(), co, kk);
      MapMat(dcols.data(), oh * ow, kk).noalias() = G * W;
      Tensor gx(n.parents[0].value().shape());
      col2im_accum(dcols, gx, kh, kw, stride, pad, oh, ow);
      n.parents[0].accum_grad(gx);
    }
  });
}

Var conv2d_fixed(const Var& x, const Tensor& kernel, PadMode pad) {
  check(x.value().ndim() == 3 && kernel.ndim() == 2, "conv2d_fixed: bad ranks");
  long kh = kernel.dim(0), kw = kernel.dim(1);
  check(kh % 2 == 1 && kw % 2 == 1, "conv2d_fixed: kernel must be odd");
  long c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  long ry = kh / 2, rx = kw / 2;
  bool rep = pad == PadMode::kReplicate;

  auto sample = [&](const Tensor& t, long ch, long iy, long ix) -> double {
    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
      if (!rep) return 0.0;
      iy = std::clamp(iy, 0L, h - 1);
      ix = std::clamp(ix, 0L, w - 1);
    }
    return t.at(ch, iy, ix);
  };

  Tensor out({c, h, w});
  for (long ch = 0; ch < c; ++ch)
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j) {
        double acc = 0.0;
        for (long u = -ry; u <= ry; ++u)
          for (long v = -rx; v <= rx; ++v)
            acc += kernel.at(u + ry, v + rx) * sample(x.value(), ch, i + u, j + v);
        out.at(ch, i, j) = acc;
      }

  return make_op(std::move(out), {x}, [kernel, rep, ry, rx, c, h, w](Node& n) {
    Tensor gx({c, h, w});
    long kh = kernel.dim(0), kw = kernel.dim(1);
    for (long ch = 0; ch < c; ++ch)
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j) {
          double g = n.grad.at(ch, i, j);
          if (g == 0.0) continue;
          for (long u = -ry; u <= ry; ++u)
            for (long v = -rx; v <= rx; ++v) {
              long iy = i + u, ix = j + v;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                if (!rep) continue;
                iy = std::clamp(iy, 0L, h - 1);
                ix = std::clamp(ix, 0L, w - 1);
              }
              gx.at(ch, iy, ix) += g * kernel[(u + ry) * kw + (v + rx)];
            }
        }
    (void)kh;
    n.parents[0].accum_grad(gx);
  });
}

Var upsample_nearest2(const Var& x) {
  check(x.value().ndim() == 3, "upsample_nearest2: need CHW");
  long c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (long ch = 0; ch < c; ++ch)
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j) {
        double v = x.value().at(ch, i, j);
        out.at(ch, 2 * i, 2 * j) = v;
        out.at(ch, 2 * i, 2 * j + 1) = v;
        out.at(ch, 2 * i + 1, 2 * j) = v;
        out.at(ch, 2 * i + 1, 2 * j + 1) = v;
      }
  return make_op(std::move(out), {x}, [c, h, w](Node& n) {
    Tensor g({c, h, w});
    for (long ch = 0; ch < c; ++ch)
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j)
          g.at(ch, i, j) = n.grad.at(ch, 2 * i, 2 * j) + n.grad.at(ch, 2 * i, 2 * j + 1) +
                           n.grad.at(ch, 2 * i + 1, 2 * j) + n.grad.at(ch, 2 * i + 1, 2 * j + 1);
    n.parents[0].accum_grad(g);
  });
}

namespace {

struct LerpIdx {
  long i0, i1;
  double w0, w1;
};

LerpIdx lerp_idx(long o, long out_n, long in_n) {
  double s = (o + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  double f = std::floor(s);
  long i0 = static_cast<long>(f);
  double w1 = s - f;
  long i1 = i0 + 1;
  i0 = std::clamp(i0, 0L, in_n - 1);
  i1 = std::clamp(i1, 0L, in_n - 1);
  return {i0, i1, 1.0 - w1, w1};
}

}  // namespace

Tensor resize_bilinear_plain(const Tensor& x, long oh, long ow) {
  long c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, oh, ow});
  for (long oy = 0; oy < oh; ++oy) {
    LerpIdx ly = lerp_idx(oy, oh, h);
    for (long ox = 0; ox < ow; ++ox) {
      LerpIdx lx = lerp_idx(ox, ow, w);
      for (long ch = 0; ch < c; ++ch)
        out.at(ch, oy, ox) = ly.w0 * (lx.w0 * x.at(ch, ly.i0, lx.i0) + lx.w1 * x.at(ch, ly.i0, lx.i1)) +
                             ly.w1 * (lx.w0 * x.at(ch, ly.i1, lx.i0) + lx.w1 * x.at(ch, ly.i1, lx.i1));
    }
  }
  return out;
}

Tensor resize_nearest_plain(const Tensor& x, long oh, long ow) {
  bool flat = x.ndim() == 2;
  long c = flat ? 1 : x.dim(0);
  long h = flat ? x.dim(0) : x.dim(1);
  long w = flat ? x.dim(1) : x.dim(2);
  Tensor src = flat ? x.reshaped({1, h, w}) : x;
  Tensor out({c, oh, ow});
  for (long oy = 0; oy < oh; ++oy) {
    long iy = std::clamp(static_cast<long>((oy + 0.5) * h / oh), 0L, h - 1);
    for (long ox = 0; ox < ow; ++ox) {
      long ix = std::clamp(static_cast<long>((ox + 0.5) * w / ow), 0L, w - 1);
      for (long ch = 0; ch < c; ++ch) out.at(ch, oy, ox) = src.at(ch, iy, ix);
    }
  }
  return flat ? out.reshaped({oh, ow}) : out;
}

Var resize_bilinear(const Var& x, long oh, long ow) {
  check(x.value().ndim() == 3, "resize_bilinear: need CHW");
  long c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out = resize_bilinear_plain(x.value(), oh, ow);
  return make_op(std::move(out), {x}, [c, h, w, oh, ow](Node& n) {
    Tensor g({c, h, w});
    for (long oy = 0; oy < oh; ++oy) {
      LerpIdx ly = lerp_idx(oy, oh, h);
      for (long ox = 0; ox < ow; ++ox) {
        LerpIdx lx = lerp_idx(ox, ow, w);
        for (long ch = 0; ch < c; ++ch) {
          double gv = n.grad.at(ch, oy, ox);
          g.at(ch, ly.i0, lx.i0) += gv * ly.w0 * lx.w0;
          g.at(ch, ly.i0, lx.i1) += gv * ly.w0 * lx.w1;
          g.at(ch, ly.i1, lx.i0) += gv * ly.w1 * lx.w0;
          g.at(ch, ly.i1, lx.i1) += gv * ly.w1 * lx.w1;
        }
      }
    }
    n.parents[0].accum_grad(g);
  });
}

Var tokens_to_chw(const Var& t, long c, long h, long w) {
  check(t.value().ndim() == 2 && t.value().dim(0) == h * w && t.value().dim(1) == c,
        "tokens_to_chw: shape mismatch");
  return reshape(transpose(t), {c, h, w});
}

Var chw_to_tokens(const Var& x) {
  check(x.value().ndim() == 3, "chw_to_tokens: need CHW");
  long c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  return transpose(reshape(x, {c, h * w}));
}

}  // namespace hemodet::nn
