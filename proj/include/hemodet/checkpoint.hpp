#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hemodet/nn.hpp"
#include "hemodet/tensor.hpp"

namespace hemodet {

struct CheckpointMeta {
  long step = 0;
  long epoch = 0;
  std::string config_text;  // serialized config snapshot
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const nn::Tensor* find(const std::string& name) const;
};

/// Binary container: "HDCK" magic, u32 format version, u64 JSON header
/// length, JSON header (meta + tensor index with shapes and data offsets),
/// then all tensor payloads as little-endian float64.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, nn::Tensor>>& tensors,
                     const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::string& path);

/// Copies every parameter in ps from the same-named checkpoint tensor;
/// throws DataError naming the first missing or shape-mismatched parameter.
void load_params(nn::ParamStore& ps, const Checkpoint& ck);

}  // namespace hemodet
