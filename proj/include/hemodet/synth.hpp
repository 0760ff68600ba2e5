#pragma once

#include <array>
#include <string>
#include <vector>

#include "hemodet/dataset.hpp"
#include "hemodet/rng.hpp"

namespace hemodet {

/// Recipe for one synthetic clip: a procedurally textured background rigidly
/// translated per frame by camera_path, plus a red-tinted elliptical bleeding
/// region growing from the source point after bleed_onset. Ground truth
/// (mask, point, background flow) is exact by construction.
struct SynthSpec {
  long n_frames = 32;
  long height = 128, width = 128;
  std::vector<std::array<double, 2>> camera_path;  // per-frame (dx, dy), [0] = (0,0)
  long bleed_onset = 8;
  std::vector<std::array<double, 2>> source_point_path;  // per-frame (x, y) px
  double region_growth_rate = 1.5;                       // px of semi-major axis per frame
  long texture_seed = 0;
};

void validate_synth_spec(const SynthSpec& spec);

struct SynthClip {
  Clip clip;
  std::vector<std::array<double, 2>> camera_path;  // echo of the spec path
};

/// Deterministic given (spec, rng state). Background flow from frame t-1 to t
/// equals camera_path[t] exactly on background pixels.
SynthClip synth_clip(const SynthSpec& spec, RngStream rng);

/// Random spec for the CLI generator. motion: static | pan | drift.
SynthSpec make_synth_spec(long n_frames, long height, long width, const std::string& motion,
                          RngStream& rng);

/// Writes one clip in the dataset layout plus a flow.json sidecar with the
/// camera path ({"camera_path": [[dx, dy], ...]}).
void write_clip(const std::string& root, const SynthClip& sc);

/// Reads a clip's flow.json sidecar.
std::vector<std::array<double, 2>> read_camera_path(const std::string& root,
                                                    const std::string& clip_id);

/// Full dataset: n_clips clips named clip000..., splits.json putting the last
/// quarter (at least one) into test, the rest into train.
void synth_dataset(const std::string& root, long n_clips, long n_frames, long height,
                   long width, const std::string& motion, long seed);

}  // namespace hemodet
