#pragma once

#include <string>
#include <vector>

#include "hemodet/errors.hpp"

namespace hemodet {

struct GaborParams {
  double wavelength = 4.0;   // px
  double phase = 0.0;        // rad
  double sigma = 2.0;        // px
  double aspect = 0.5;
  long kernel_size = 7;      // odd
  long orientations = 4;     // evenly spaced in [0, pi)
};

/// Every runtime knob; flat dotted keys in the config file map 1:1 onto
/// fields here. See serialize_config() for the full schema.
struct ModelConfig {
  long window_size = 8;         // frames per online training window
  long input_resolution = 512;  // frames resized to this square before the model
  long channels_coarse = 128;   // token width at stride 16
  long channels_quarter = 32;   // map width at stride 4
  long channels_eighth = 64;    // map width at stride 8
  long memory_capacity = 7;     // window_size - 1 unless overridden (then validated)
  GaborParams gabor;
  double existence_threshold = 0.5;

  double region_weight = 1.0;
  double edge_weight = 1.0;
  double score_weight = 1.0;
  double point_weight = 0.5;

  double lr_encoder = 5e-6;
  double lr_other = 5e-4;
  long epochs = 20;
  long warmup_steps = 0;   // 0 -> 5% of total_steps
  long total_steps = 0;    // 0 -> epochs * windows-per-epoch, filled by the trainer
  long max_steps = 0;      // 0 -> unbounded; hard stop for quick runs
  double teacher_forcing_fraction = 0.25;

  std::string flow_backend = "classical";          // classical | injected | external
  std::string offset_normalization = "paper_hw";   // paper_hw | background_count

  std::vector<double> pck_thresholds{0.02, 0.05, 0.10};
  long seed = 0;
};

/// Parses the flat-key text schema (`a.b.c = value`, `#` comments, commas for
/// lists). Throws ConfigError with the offending line/key. Does not validate.
ModelConfig parse_config(const std::string& text);

/// Reads a file, applies HEMODET_* environment overrides, validates.
ModelConfig load_config(const std::string& path);

/// Applies environment overrides (key a.b.c -> HEMODET_A_B_C) in place.
void apply_env_overrides(ModelConfig& cfg);

/// Throws ConfigError naming the first violated field.
void validate_config(const ModelConfig& cfg);

/// Sorted `key = value` lines; parse(serialize(c)) == c.
std::string serialize_config(const ModelConfig& cfg);

}  // namespace hemodet
