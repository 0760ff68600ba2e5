#include "hemodet/optim.hpp"

#include <cmath>

#include "hemodet/errors.hpp"

namespace hemodet {

double lr_schedule(long t, long warmup, long total, double max_lr) {
  if (warmup <= 0 || total <= warmup) throw ConfigError("lr_schedule: need 0 < warmup < total");
  if (t < 0 || t > total) throw ConfigError("lr_schedule: step outside [0, total]");
  if (t <= warmup) return max_lr * static_cast<double>(t) / static_cast<double>(warmup);
  return max_lr * static_cast<double>(total - t) / static_cast<double>(total - warmup);
}

Adam::Adam(std::vector<Group> groups, double beta1, double beta2, double eps)
    : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Group& g : groups_)
    for (const auto& [name, v] : g.params)
      slots_.push_back({name, nn::Tensor::zeros(v.value().shape()),
                        nn::Tensor::zeros(v.value().shape())});
}

void Adam::step(long t, long warmup, long total) {
  ++updates_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(updates_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(updates_));
  size_t slot = 0;
  for (const Group& g : groups_) {
    double lr = lr_schedule(t, warmup, total, g.max_lr);
    for (const auto& [name, v] : g.params) {
      Slot& s = slots_[slot++];
      nn::Var param = v;
      // Skip by gradient content, not buffer allocation: a zeroed buffer left
      // over from an earlier step must behave exactly like no buffer at all,
      // or a resumed process (which starts with no buffers) would diverge
      // from the uninterrupted one.
      if (!param.has_grad() || param.grad().abs_max() == 0.0) continue;
      const nn::Tensor& grad = param.node()->grad;
      nn::Tensor& value = param.node()->value;
      for (long i = 0; i < value.size(); ++i) {
        double gi = grad[i];
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
        double mhat = s.m[i] / bc1;
        double vhat = s.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }
}

void Adam::zero_grads() {
  for (const Group& g : groups_)
    for (const auto& [name, v] : g.params) {
      nn::Var param = v;
      param.zero_grad();
    }
}

}  // namespace hemodet
