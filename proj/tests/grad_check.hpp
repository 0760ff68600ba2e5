#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hemodet/autograd.hpp"
#include "hemodet/nn.hpp"
#include "hemodet/rng.hpp"

namespace hdtest {

using hemodet::nn::Tensor;
using hemodet::nn::Var;

/// Central-difference check of d(loss)/d(leaf) for every element of every
/// leaf; returns the worst absolute deviation from the recorded gradient.
inline double max_grad_err(const std::function<Var(std::vector<Var>&)>& f,
                           const std::vector<Tensor>& leaf_values, double eps = 1e-5) {
  using namespace hemodet::nn;
  std::vector<Var> leaves;
  for (const Tensor& t : leaf_values) leaves.push_back(leaf(t.clone()));
  Var loss = f(leaves);
  backward(loss);

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (long i = 0; i < leaf_values[li].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var> vs;
        for (size_t k = 0; k < leaf_values.size(); ++k) {
          Tensor t = leaf_values[k].clone();
          if (k == li) t[i] += delta;
          vs.push_back(constant(std::move(t)));
        }
        return f(vs).value()[0];
      };
      double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
      double an = leaves[li].has_grad() ? leaves[li].grad()[i] : 0.0;
      worst = std::max(worst, std::abs(fd - an));
    }
  }
  return worst;
}

/// FNV-1a over the raw bytes of every parameter whose name starts with
/// prefix; detects any bit-level change in a partition.
inline uint64_t param_hash(const hemodet::nn::ParamStore& ps, const std::string& prefix) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& [name, var] : ps.items()) {
    if (name.rfind(prefix, 0) != 0) continue;
    const Tensor& t = var.value();
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (long i = 0; i < t.size() * static_cast<long>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// Filled with smooth values away from relu/abs kinks.
inline Tensor random_tensor(std::vector<long> shape, hemodet::RngStream& rng,
                            double scale = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) {
    double v = rng.normal();
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    t[i] = v * scale;
  }
  return t;
}

}  // namespace hdtest
