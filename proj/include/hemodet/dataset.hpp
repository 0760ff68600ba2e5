#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hemodet/errors.hpp"
#include "hemodet/tensor.hpp"

namespace hemodet {

struct ImageFrameData {
  nn::Tensor pixels;  // [3,H,W] in [0,1]
  long frame_index = 0;
  std::string clip_id;
};

struct BleedAnnotationData {
  nn::Tensor mask;  // [H,W] 0/1; defined iff has_region
  bool has_region = false;
  bool has_point = false;
  double point_x = 0.0, point_y = 0.0;  // pixel coordinates
};

struct Clip {
  std::string clip_id;
  double fps_tag = 0.0;
  std::vector<ImageFrameData> frames;
  std::vector<BleedAnnotationData> annotations;

  long size() const { return static_cast<long>(frames.size()); }
  long height() const { return frames.empty() ? 0 : frames[0].pixels.dim(1); }
  long width() const { return frames.empty() ? 0 : frames[0].pixels.dim(2); }
};

/// Loads root/clips/<clip_id>/ (frames/%06d.png, masks/%06d.png when a region
/// exists, annotations.json) and validates the result. Masks binarize at
/// >=128 of 255.
Clip load_clip(const std::string& root, const std::string& clip_id);

/// Throws DataError on contiguity/shape/annotation violations.
void validate_clip(const Clip& clip);

/// 3x3 morphological gradient (dilate - erode, replicated borders); output
/// values are 0/1 and mark the boundary ring of the mask.
nn::Tensor derive_edge_map(const nn::Tensor& mask);

/// Inclusive frame range [begin, end] of one online window.
struct WindowRange {
  long begin = 0, end = 0;
  long length() const { return end - begin + 1; }
};

/// One window ending at every frame k: [max(0, k-N+1), k]. Windows with
/// k < N-1 are left-truncated warm-up windows.
std::vector<WindowRange> window_sampler(long n_frames, long N);

struct SplitLists {
  std::vector<std::string> train, test;
};

SplitLists load_splits(const std::string& root);
std::vector<std::string> list_clip_ids(const std::string& root);

}  // namespace hemodet
