#include "hemodet/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>

#include <nlohmann/json.hpp>

#include "hemodet/errors.hpp"

namespace hemodet {

namespace {

constexpr char kMagic[4] = {'H', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, nn::Tensor>>& tensors,
                     const CheckpointMeta& meta) {
  nlohmann::json index;
  index["meta"] = {{"step", meta.step}, {"epoch", meta.epoch}, {"config", meta.config_text}};
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(double);
  }
  index["tensors"] = std::move(list);
  std::string header = index.dump();

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot create checkpoint: " + path);
  FileCloser guard{f};
  std::uint64_t hlen = header.size();
  bool ok = std::fwrite(kMagic, 1, 4, f) == 4 && std::fwrite(&kVersion, 4, 1, f) == 1 &&
            std::fwrite(&hlen, 8, 1, f) == 1 &&
            std::fwrite(header.data(), 1, header.size(), f) == header.size();
  for (const auto& [name, t] : tensors) {
    if (!ok) break;
    ok = std::fwrite(t.data(), sizeof(double), static_cast<size_t>(t.size()), f) ==
         static_cast<size_t>(t.size());
  }
  if (!ok) throw DataError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open checkpoint: " + path);
  FileCloser guard{f};

  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  if (std::fread(&version, 4, 1, f) != 1 || version != kVersion)
    throw DataError("unsupported checkpoint version in " + path);
  if (std::fread(&hlen, 8, 1, f) != 1) throw DataError("truncated checkpoint header: " + path);
  std::string header(hlen, '\0');
  if (std::fread(header.data(), 1, hlen, f) != hlen)
    throw DataError("truncated checkpoint header: " + path);

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ck;
  ck.meta.step = index["meta"].value("step", 0L);
  ck.meta.epoch = index["meta"].value("epoch", 0L);
  ck.meta.config_text = index["meta"].value("config", std::string());
  for (const auto& entry : index["tensors"]) {
    std::vector<long> shape = entry["shape"].get<std::vector<long>>();
    nn::Tensor t(shape);
    if (std::fread(t.data(), sizeof(double), static_cast<size_t>(t.size()), f) !=
        static_cast<size_t>(t.size()))
      throw DataError("truncated tensor data in " + path);
    ck.tensors.emplace_back(entry["name"].get<std::string>(), std::move(t));
  }
  return ck;
}

void load_params(nn::ParamStore& ps, const Checkpoint& ck) {
  for (const auto& [name, var] : ps.items()) {
    const nn::Tensor* t = ck.find(name);
    if (!t) throw DataError("checkpoint: missing parameter " + name);
    if (!t->same_shape(var.value()))
      throw DataError("checkpoint: shape mismatch for " + name + " (" + t->shape_str() +
                      " vs " + var.value().shape_str() + ")");
    std::copy(t->data(), t->data() + t->size(), var.node()->value.data());
  }
}

}  // namespace hemodet
