#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hemodet/detector.hpp"
#include "hemodet/evaluator.hpp"
#include "hemodet/optim.hpp"

namespace hemodet {

/// One training window: clip index into the trainer's train-clip list plus
/// an inclusive frame range from window_sampler.
struct TrainWindow {
  long clip = 0;
  WindowRange range;
};

struct StepLosses {
  long step = 0;  // 1-based index of this mask+point pair
  double mask_loss = 0.0;
  double point_loss = 0.0;
};

/// Alternating two-phase trainer. Each step streams one window twice: the
/// mask phase records gradients for encoder + mask branch only (point outputs
/// are constants) and applies the mask-side Adam; the point phase re-streams
/// against the just-updated mask branch (now constant) and applies the
/// point-side Adam. The step counter advances once per pair.
class Trainer {
 public:
  Trainer(const ModelConfig& cfg, std::string data_root, std::string out_dir);

  StepLosses alternating_step(const TrainWindow& w);

  /// One half of an alternating step (exposed so tests can verify the freeze
  /// contract between phases). Does not advance the step counter.
  double run_phase(const TrainWindow& w, bool mask_phase);

  /// Epoch loop with per-epoch held-out evaluation, JSONL metrics log, and
  /// best/last checkpoints. With resume=true and an existing last checkpoint,
  /// continues at the next epoch and reproduces the uninterrupted run
  /// bit-for-bit (optimizer state round-trips; per-epoch shuffles are keyed
  /// by epoch index, not by RNG history).
  void train(bool resume = false);

  /// Shuffled window plan for one epoch (deterministic in cfg.seed + epoch).
  std::vector<TrainWindow> epoch_windows(long epoch) const;

  OnlineDetector& detector() { return *det_; }
  const ModelConfig& config() const { return cfg_; }
  long step() const { return step_; }
  long total_steps() const { return total_steps_; }
  long warmup_steps() const { return warmup_; }
  long teacher_steps() const { return teacher_steps_; }
  const std::vector<Clip>& test_clips() const { return test_clips_; }
  std::string last_checkpoint_path() const;
  std::string best_checkpoint_path() const;
  std::string metrics_log_path() const;

  void save(const std::string& path, long epoch) const;
  /// Returns the epoch to resume at (saved epoch + 1). Throws ConfigError if
  /// the checkpoint was produced by an incompatible config (all keys except
  /// train.epochs / train.max_steps must match).
  long restore(const std::string& path);

 private:
  struct TrainClip {
    Clip clip;
    std::vector<nn::Tensor> working;       // [3,R,R] frames
    std::vector<nn::Tensor> working_mask;  // [R,R], zeros when no region
    std::vector<nn::Tensor> quarter_edge;  // [R/4,R/4] GT boundary ring
    std::vector<double> nx, ny;            // normalized GT point (0 when absent)
    std::vector<std::optional<FlowField>> flow;  // k -> flow (k-1)->k, lazy
  };

  const FlowField& flow_for(long clip_idx, long k);
  [[noreturn]] void abort_with_dump(const TrainWindow& w, bool mask_phase, double loss);

  ModelConfig cfg_;
  std::string data_root_, out_dir_;
  std::unique_ptr<OnlineDetector> det_;
  std::unique_ptr<FlowEstimator> flow_est_;
  std::vector<TrainClip> clips_;
  std::vector<Clip> test_clips_;
  std::unique_ptr<Adam> opt_mask_, opt_point_;
  long step_ = 0;
  long total_steps_ = 0, schedule_total_ = 0, warmup_ = 0, teacher_steps_ = 0;
  double best_iou_ = -1.0, best_pck_ = -1.0;
};

}  // namespace hemodet
