#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hemodet/tensor.hpp"

namespace hemodet::nn {

class Var;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
};

/// Handle to a node in the reverse-mode graph. Ops on Vars record their
/// backward closure unless grad mode is off or no input requires grad.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& grad();
  bool has_grad() const { return n_ && n_->grad.defined(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  std::shared_ptr<Node> node() const { return n_; }

  void accum_grad(const Tensor& g);
  void zero_grad();

 private:
  std::shared_ptr<Node> n_;
};

/// Thread-local gradient recording switch.
struct GradMode {
  static bool enabled();
  static void set(bool on);
  struct Guard {
    explicit Guard(bool on) : prev_(enabled()) { set(on); }
    ~Guard() { set(prev_); }

   private:
    bool prev_;
  };
};
using NoGradGuard = GradMode::Guard;

Var constant(Tensor v);
Var leaf(Tensor v, bool requires_grad = true);
Var detach(const Var& v);

/// Core of every op: wraps a computed value, its parents and backward closure.
/// Prunes the closure when recording is off or no parent requires grad.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

/// Reverse pass from a scalar root; accumulates into every reachable
/// requires-grad node (leaves keep theirs until zeroed).
void backward(const Var& root);

// ---- elementwise / shape ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var reshape(const Var& a, std::vector<long> shape);
Var slice_rows(const Var& a, long from, long to);
Var slice_cols(const Var& a, long from, long to);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);  // [m,k] x [k,n]
Var transpose(const Var& a);             // [m,n] -> [n,m]
Var add_bias_rows(const Var& x, const Var& b);  // [n,c] + [c] per row
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var sum(const Var& a);
Var mean(const Var& a);

// ---- spatial (CHW maps) ----
enum class PadMode { kZero, kReplicate };
Var conv2d(const Var& x, const Var& w, const Var& b, long stride, long pad);
/// Depthwise convolution with one fixed (non-trainable) odd kernel applied to
/// every channel; output keeps the spatial size.
Var conv2d_fixed(const Var& x, const Tensor& kernel, PadMode pad);
Var upsample_nearest2(const Var& x);
Var resize_bilinear(const Var& x, long oh, long ow);

// tokens [h*w, c] <-> map [c, h, w]
Var tokens_to_chw(const Var& t, long c, long h, long w);
Var chw_to_tokens(const Var& x);

// ---- plain-tensor helpers shared with non-autograd code ----
Tensor resize_bilinear_plain(const Tensor& x, long oh, long ow);
/// Nearest-neighbour resize of a [H,W] or [C,H,W] tensor (pixel-center
/// sampling). Exact for masks: output values are a subset of input values.
Tensor resize_nearest_plain(const Tensor& x, long oh, long ow);
Tensor matmul_plain(const Tensor& a, const Tensor& b);

}  // namespace hemodet::nn
