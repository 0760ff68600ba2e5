#include "hemodet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hemodet/checkpoint.hpp"
#include "hemodet/losses.hpp"
#include "hemodet/rng.hpp"
#include "json.hpp"

namespace hemodet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config snapshot comparison for resume: everything must match except the
// run-length knobs, so a finished run can be extended.
bool compatible_configs(const std::string& a, const std::string& b) {
  auto filtered = [](const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.rfind("train.epochs", 0) == 0 || line.rfind("train.max_steps", 0) == 0)
        continue;
      out += line;
      out += '\n';
    }
    return out;
  };
  return filtered(a) == filtered(b);
}

nn::Tensor scalar_tensor(double v) { return nn::Tensor::from({1}, {v}); }

void append_adam_state(std::vector<std::pair<std::string, nn::Tensor>>& tensors,
                       const std::string& prefix, Adam& opt) {
  for (auto& slot : opt.slots()) {
    tensors.emplace_back(prefix + "." + slot.name + ".m", slot.m);
    tensors.emplace_back(prefix + "." + slot.name + ".v", slot.v);
  }
  tensors.emplace_back(prefix + ".updates",
                       scalar_tensor(static_cast<double>(opt.update_count())));
}

void restore_adam_state(const Checkpoint& ck, const std::string& prefix, Adam& opt) {
  for (auto& slot : opt.slots()) {
    const nn::Tensor* m = ck.find(prefix + "." + slot.name + ".m");
    const nn::Tensor* v = ck.find(prefix + "." + slot.name + ".v");
    if (!m || !v) throw DataError("checkpoint: missing optimizer state for " + slot.name);
    if (!m->same_shape(slot.m) || !v->same_shape(slot.v))
      throw DataError("checkpoint: optimizer state shape mismatch for " + slot.name);
    std::copy(m->data(), m->data() + m->size(), slot.m.data());
    std::copy(v->data(), v->data() + v->size(), slot.v.data());
  }
  const nn::Tensor* n = ck.find(prefix + ".updates");
  if (!n) throw DataError("checkpoint: missing " + prefix + ".updates");
  opt.set_update_count(static_cast<long>(std::llround((*n)[0])));
}

}  // namespace

Trainer::Trainer(const ModelConfig& cfg, std::string data_root, std::string out_dir)
    : cfg_(cfg), data_root_(std::move(data_root)), out_dir_(std::move(out_dir)) {
  fs::create_directories(out_dir_);
  det_ = std::make_unique<OnlineDetector>(cfg_, data_root_);
  flow_est_ = make_flow_estimator(cfg_, data_root_);

  const SplitLists splits = load_splits(data_root_);
  if (splits.train.empty()) throw DataError("training split is empty: " + data_root_);
  const long res = cfg_.input_resolution;
  const long qres = res / 4;
  long windows_per_epoch = 0;
  for (const std::string& id : splits.train) {
    TrainClip tc;
    tc.clip = load_clip(data_root_, id);
    const long n = tc.clip.size();
    const long h = tc.clip.height(), w = tc.clip.width();
    windows_per_epoch += n;
    tc.working.reserve(n);
    for (long k = 0; k < n; ++k) {
      const auto& frame = tc.clip.frames[k];
      const auto& ann = tc.clip.annotations[k];
      tc.working.push_back(h == res && w == res
                               ? frame.pixels
                               : nn::resize_bilinear_plain(frame.pixels, res, res));
      nn::Tensor m = ann.has_region
                         ? (h == res && w == res
                                ? ann.mask
                                : nn::resize_nearest_plain(ann.mask, res, res))
                         : nn::Tensor({res, res});
      tc.working_mask.push_back(m);
      tc.quarter_edge.push_back(
          derive_edge_map(nn::resize_nearest_plain(m, qres, qres))
              .reshaped({1, qres, qres}));
      tc.nx.push_back(ann.has_point ? ann.point_x / w : 0.0);
      tc.ny.push_back(ann.has_point ? ann.point_y / h : 0.0);
    }
    tc.flow.resize(static_cast<size_t>(n));
    clips_.push_back(std::move(tc));
  }
  for (const std::string& id : splits.test) test_clips_.push_back(load_clip(data_root_, id));

  total_steps_ = cfg_.total_steps > 0 ? cfg_.total_steps : cfg_.epochs * windows_per_epoch;
  schedule_total_ = std::max<long>(2, total_steps_);
  warmup_ = cfg_.warmup_steps > 0 ? cfg_.warmup_steps
                                  : std::max<long>(1, total_steps_ / 20);
  warmup_ = std::clamp<long>(warmup_, 1, schedule_total_ - 1);
  teacher_steps_ =
      static_cast<long>(std::llround(cfg_.teacher_forcing_fraction * total_steps_));

  // Parameter partition: encoder + mask branch step together (encoder at its
  // own lower rate); the point branch steps alone.
  Adam::Group enc{{}, cfg_.lr_encoder}, maskg{{}, cfg_.lr_other}, pointg{{}, cfg_.lr_other};
  for (const auto& [name, var] : det_->params().items()) {
    if (name.rfind("backbone.", 0) == 0)
      enc.params.emplace_back(name, var);
    else if (name.rfind("maskbranch.", 0) == 0)
      maskg.params.emplace_back(name, var);
    else if (name.rfind("pointbranch.", 0) == 0)
      pointg.params.emplace_back(name, var);
    else
      throw Error("unpartitioned parameter: " + name);
  }
  opt_mask_ = std::make_unique<Adam>(std::vector<Adam::Group>{enc, maskg});
  opt_point_ = std::make_unique<Adam>(std::vector<Adam::Group>{pointg});
}

std::string Trainer::last_checkpoint_path() const {
  return (fs::path(out_dir_) / "last.ckpt").string();
}
std::string Trainer::best_checkpoint_path() const {
  return (fs::path(out_dir_) / "best.ckpt").string();
}
std::string Trainer::metrics_log_path() const {
  return (fs::path(out_dir_) / "metrics.jsonl").string();
}

const FlowField& Trainer::flow_for(long clip_idx, long k) {
  TrainClip& tc = clips_[static_cast<size_t>(clip_idx)];
  auto& slot = tc.flow[static_cast<size_t>(k)];
  if (!slot)
    slot = flow_est_->estimate(tc.working[k - 1], tc.working[k], tc.clip.clip_id, k);
  return *slot;
}

double Trainer::run_phase(const TrainWindow& w, bool mask_phase) {
  TrainClip& tc = clips_[static_cast<size_t>(w.clip)];
  det_->reset();
  det_->params().zero_grads();
  const bool teacher = step_ < teacher_steps_;

  std::vector<nn::Var> terms;
  terms.reserve(static_cast<size_t>(w.range.length()));
  for (long k = w.range.begin; k <= w.range.end; ++k) {
    FrameOptions opts;
    opts.mask_grad = mask_phase;
    opts.point_grad = !mask_phase;
    if (k > w.range.begin) opts.flow = &flow_for(w.clip, k);
    if (teacher) opts.teacher_mask = &tc.working_mask[k];
    FrameResult r = det_->process_frame(tc.working[k], k, tc.clip.clip_id, opts);
    if (mask_phase) {
      const long res = cfg_.input_resolution;
      terms.push_back(
          mask_objective(r.mask_logits, r.edge_logits,
                         tc.working_mask[k].reshaped({1, res, res}),
                         tc.quarter_edge[k], cfg_));
    } else {
      const auto& ann = tc.clip.annotations[k];
      terms.push_back(point_objective(r.point_coord, r.point_score, ann.has_point,
                                      tc.nx[k], tc.ny[k], cfg_));
    }
  }
  nn::Var total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
  nn::Var loss = nn::scale(total, 1.0 / static_cast<double>(terms.size()));
  const double value = loss.value()[0];
  if (!std::isfinite(value)) abort_with_dump(w, mask_phase, value);
  nn::backward(loss);
  const long t = std::min<long>(step_ + 1, schedule_total_);
  (mask_phase ? *opt_mask_ : *opt_point_).step(t, warmup_, schedule_total_);
  return value;
}

void Trainer::abort_with_dump(const TrainWindow& w, bool mask_phase, double loss) {
  json stats = json::object();
  for (const auto& [name, var] : det_->params().items()) {
    const size_t dot = name.find('.');
    const std::string prefix = name.substr(0, dot);
    const double mag = var.value().abs_max();
    if (!stats.contains(prefix) || stats[prefix].get<double>() < mag) stats[prefix] = mag;
  }
  const json dump = {{"step", step_ + 1},
                     {"phase", mask_phase ? "mask" : "point"},
                     {"clip_id", clips_[static_cast<size_t>(w.clip)].clip.clip_id},
                     {"window_begin", w.range.begin},
                     {"window_end", w.range.end},
                     {"loss", std::isnan(loss) ? "nan" : "inf"},
                     {"param_abs_max", stats}};
  const std::string path = (fs::path(out_dir_) / "abort_dump.json").string();
  std::ofstream out(path, std::ios::binary);
  out << dump.dump(2) << "\n";
  throw TrainAbort("non-finite training loss at step " + std::to_string(step_ + 1), path);
}

StepLosses Trainer::alternating_step(const TrainWindow& w) {
  StepLosses out;
  out.step = step_ + 1;
  out.mask_loss = run_phase(w, true);
  out.point_loss = run_phase(w, false);
  ++step_;
  return out;
}

std::vector<TrainWindow> Trainer::epoch_windows(long epoch) const {
  std::vector<TrainWindow> windows;
  for (size_t ci = 0; ci < clips_.size(); ++ci) {
    for (const WindowRange& r : window_sampler(clips_[ci].clip.size(), cfg_.window_size))
      windows.push_back({static_cast<long>(ci), r});
  }
  RngStream rng = RngStream(static_cast<uint64_t>(cfg_.seed))
                      .split("train/epoch" + std::to_string(epoch));
  for (long i = static_cast<long>(windows.size()) - 1; i > 0; --i) {
    const long j = rng.uniform_int(i + 1);
    std::swap(windows[static_cast<size_t>(i)], windows[static_cast<size_t>(j)]);
  }
  return windows;
}

void Trainer::save(const std::string& path, long epoch) const {
  std::vector<std::pair<std::string, nn::Tensor>> tensors;
  for (const auto& [name, var] : det_->params().items()) tensors.emplace_back(name, var.value());
  append_adam_state(tensors, "optimizer_A", *opt_mask_);
  append_adam_state(tensors, "optimizer_B", *opt_point_);
  tensors.emplace_back("train.best_iou", scalar_tensor(best_iou_));
  tensors.emplace_back("train.best_pck", scalar_tensor(best_pck_));
  CheckpointMeta meta;
  meta.step = step_;
  meta.epoch = epoch;
  meta.config_text = serialize_config(cfg_);
  save_checkpoint(path, tensors, meta);
}

long Trainer::restore(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!compatible_configs(ck.meta.config_text, serialize_config(cfg_)))
    throw ConfigError("checkpoint config does not match the current config: " + path);
  load_params(det_->params(), ck);
  restore_adam_state(ck, "optimizer_A", *opt_mask_);
  restore_adam_state(ck, "optimizer_B", *opt_point_);
  if (const nn::Tensor* t = ck.find("train.best_iou")) best_iou_ = (*t)[0];
  if (const nn::Tensor* t = ck.find("train.best_pck")) best_pck_ = (*t)[0];
  step_ = ck.meta.step;
  return ck.meta.epoch + 1;
}

void Trainer::train(bool resume) {
  long start_epoch = 0;
  if (resume && fs::exists(last_checkpoint_path()))
    start_epoch = restore(last_checkpoint_path());

  std::ofstream log(metrics_log_path(),
                    start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot open metrics log: " + metrics_log_path());

  const size_t best_pck_idx =
      cfg_.pck_thresholds.empty()
          ? 0
          : static_cast<size_t>(std::max_element(cfg_.pck_thresholds.begin(),
                                                 cfg_.pck_thresholds.end()) -
                                cfg_.pck_thresholds.begin());

  bool stop = false;
  for (long epoch = start_epoch; epoch < cfg_.epochs && !stop; ++epoch) {
    double mask_sum = 0.0, point_sum = 0.0;
    long steps_this_epoch = 0;
    for (const TrainWindow& w : epoch_windows(epoch)) {
      if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
        stop = true;
        break;
      }
      const StepLosses sl = alternating_step(w);
      mask_sum += sl.mask_loss;
      point_sum += sl.point_loss;
      ++steps_this_epoch;
    }
    if (steps_this_epoch == 0) break;

    json rec = {{"epoch", epoch},
                {"step", step_},
                {"mask_loss", mask_sum / steps_this_epoch},
                {"point_loss", point_sum / steps_this_epoch},
                {"lr_scale", lr_schedule(std::min(step_, schedule_total_), warmup_,
                                         schedule_total_, 1.0)}};
    double epoch_iou = -1.0, epoch_pck = -1.0;
    if (!test_clips_.empty()) {
      const EvalReport rep = evaluate_clips(det_.get(), cfg_, test_clips_);
      const ClipEvalResult& agg = rep.aggregate;
      epoch_iou = agg.mean_iou();
      epoch_pck = agg.pck.empty() ? 0.0 : agg.pck[best_pck_idx].value();
      rec["iou"] = agg.region_frames > 0 ? json(agg.mean_iou()) : json(nullptr);
      rec["dice"] = agg.region_frames > 0 ? json(agg.mean_dice()) : json(nullptr);
      rec["fp_area_rate"] =
          agg.empty_frames > 0 ? json(agg.fp_area_rate()) : json(nullptr);
      json pck = json::object();
      for (size_t t = 0; t < rep.pck_thresholds.size(); ++t) {
        char key[16];
        std::snprintf(key, sizeof(key), "%g", rep.pck_thresholds[t]);
        pck[key] = agg.pck[t].defined() ? json(agg.pck[t].value()) : json(nullptr);
      }
      rec["pck"] = pck;
    }
    log << rec.dump() << "\n";
    log.flush();

    save(last_checkpoint_path(), epoch);
    const bool improved =
        test_clips_.empty() || epoch_iou > best_iou_ ||
        (epoch_iou == best_iou_ && epoch_pck > best_pck_);
    if (improved) {
      best_iou_ = epoch_iou;
      best_pck_ = epoch_pck;
      // re-save (not copy) so the best checkpoint carries the updated bests
      save(best_checkpoint_path(), epoch);
      save(last_checkpoint_path(), epoch);
    }
  }
}

}  // namespace hemodet
