#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hemodet/autograd.hpp"

namespace hemodet {

/// Linear warmup to max_lr at t = warmup, then linear decay to 0 at t = total.
double lr_schedule(long t, long warmup, long total, double max_lr);

/// Adam over named parameter groups; each group has its own peak learning
/// rate, scaled by the shared warmup/decay schedule. Parameters with no
/// gradient (buffer unallocated or all-zero) are skipped entirely: their
/// values and moments stay bit-identical, so the alternating trainer's
/// freeze contract and checkpoint-resume reproducibility both hold.
class Adam {
 public:
  struct Group {
    std::vector<std::pair<std::string, nn::Var>> params;
    double max_lr = 1e-3;
  };

  explicit Adam(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  /// One update using lr_schedule(t, warmup, total, group.max_lr).
  void step(long t, long warmup, long total);

  void zero_grads();
  long update_count() const { return updates_; }

  /// Checkpoint surface: first/second moment per parameter, by name.
  struct Slot {
    std::string name;
    nn::Tensor m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  void set_update_count(long n) { updates_ = n; }

 private:
  std::vector<Group> groups_;
  std::vector<Slot> slots_;  // parallel to the flattened group parameter list
  double beta1_, beta2_, eps_;
  long updates_ = 0;
};

}  // namespace hemodet
