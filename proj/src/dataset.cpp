#include "hemodet/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hemodet/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hemodet {

namespace {

std::string frame_name(long idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06ld.png", idx);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed json in " + path + ": " + e.what());
  }
}

}  // namespace

Clip load_clip(const std::string& root, const std::string& clip_id) {
  fs::path dir = fs::path(root) / "clips" / clip_id;
  if (!fs::is_directory(dir)) throw DataError("no such clip directory: " + dir.string());

  json ann = read_json_file((dir / "annotations.json").string());
  if (!ann.contains("fps") || !ann.contains("frames"))
    throw DataError(clip_id + ": annotations.json must contain fps and frames");

  Clip clip;
  clip.clip_id = clip_id;
  clip.fps_tag = ann["fps"].get<double>();

  for (const json& rec : ann["frames"]) {
    if (!rec.contains("idx") || !rec.contains("point") || !rec.contains("has_region"))
      throw DataError(clip_id + ": frame record missing idx/point/has_region");
    long idx = rec["idx"].get<long>();

    ImageFrameData frame;
    frame.clip_id = clip_id;
    frame.frame_index = idx;
    fs::path fpath = dir / "frames" / frame_name(idx);
    if (!fs::exists(fpath))
      throw DataError(clip_id + ": missing frame file " + fpath.string());
    ImageU8 img = read_png(fpath.string());
    if (img.channels != 3)
      throw DataError(clip_id + ": frame " + std::to_string(idx) + " is not RGB");
    frame.pixels = image_to_tensor(img);

    BleedAnnotationData a;
    a.has_region = rec["has_region"].get<bool>();
    if (a.has_region) {
      fs::path mpath = dir / "masks" / frame_name(idx);
      if (!fs::exists(mpath))
        throw DataError(clip_id + ": has_region set but mask file missing for frame " +
                        std::to_string(idx));
      a.mask = read_mask_png(mpath.string());
      if (a.mask.dim(0) != img.height || a.mask.dim(1) != img.width)
        throw DataError(clip_id + ": mask size mismatch at frame " + std::to_string(idx) +
                        " (" + a.mask.shape_str() + " vs frame " +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + ")");
      if (a.mask.sum() == 0.0)
        throw DataError(clip_id + ": has_region set but mask empty at frame " +
                        std::to_string(idx));
    }
    if (!rec["point"].is_null()) {
      if (!rec["point"].is_array() || rec["point"].size() != 2)
        throw DataError(clip_id + ": point must be [x, y] or null at frame " +
                        std::to_string(idx));
      a.has_point = true;
      a.point_x = rec["point"][0].get<double>();
      a.point_y = rec["point"][1].get<double>();
    }
    clip.frames.push_back(std::move(frame));
    clip.annotations.push_back(std::move(a));
  }

  validate_clip(clip);
  return clip;
}

void validate_clip(const Clip& clip) {
  if (clip.frames.empty()) throw DataError(clip.clip_id + ": clip has no frames");
  long h = clip.height(), w = clip.width();
  if (h < 16 || w < 16) throw DataError(clip.clip_id + ": frames smaller than 16x16");
  for (size_t i = 0; i < clip.frames.size(); ++i) {
    const ImageFrameData& f = clip.frames[i];
    if (f.frame_index != static_cast<long>(i))
      throw DataError(clip.clip_id + ": frame indices not contiguous from 0 (saw " +
                      std::to_string(f.frame_index) + " at position " + std::to_string(i) + ")");
    if (f.pixels.dim(1) != h || f.pixels.dim(2) != w)
      throw DataError(clip.clip_id + ": frame " + std::to_string(i) + " size differs");
    if (!f.pixels.all_finite())
      throw DataError(clip.clip_id + ": non-finite pixels at frame " + std::to_string(i));
    const BleedAnnotationData& a = clip.annotations[i];
    if (a.has_region != a.mask.defined())
      throw DataError(clip.clip_id + ": has_region inconsistent with mask presence at frame " +
                      std::to_string(i));
    if (a.has_point &&
        (a.point_x < 0 || a.point_x >= w || a.point_y < 0 || a.point_y >= h))
      throw DataError(clip.clip_id + ": point outside image at frame " + std::to_string(i));
  }
}

nn::Tensor derive_edge_map(const nn::Tensor& mask) {
  long h = mask.dim(0), w = mask.dim(1);
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return mask.at(y, x);
  };
  nn::Tensor edge({h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double mx = 0.0, mn = 1.0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          double v = at(y + dy, x + dx);
          mx = std::max(mx, v);
          mn = std::min(mn, v);
        }
      edge.at(y, x) = mx - mn > 0.5 ? 1.0 : 0.0;
    }
  return edge;
}

std::vector<WindowRange> window_sampler(long n_frames, long N) {
  if (N < 2) throw Error("window_sampler: N must be >= 2");
  std::vector<WindowRange> out;
  for (long k = 0; k < n_frames; ++k) out.push_back({std::max(0L, k - N + 1), k});
  return out;
}

SplitLists load_splits(const std::string& root) {
  json j = read_json_file((fs::path(root) / "splits.json").string());
  if (!j.contains("train") || !j.contains("test"))
    throw DataError("splits.json must contain train and test lists");
  SplitLists s;
  for (const json& c : j["train"]) s.train.push_back(c.get<std::string>());
  for (const json& c : j["test"]) s.test.push_back(c.get<std::string>());
  return s;
}

std::vector<std::string> list_clip_ids(const std::string& root) {
  fs::path dir = fs::path(root) / "clips";
  if (!fs::is_directory(dir)) throw DataError("no clips directory under " + root);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace hemodet
