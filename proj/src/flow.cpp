#include "hemodet/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>

#include "hemodet/autograd.hpp"
#include "hemodet/errors.hpp"
#include "hemodet/image_io.hpp"
#include "hemodet/synth.hpp"

namespace fs = std::filesystem;

namespace hemodet {

namespace {

nn::Tensor to_gray(const nn::Tensor& rgb) {
  long h = rgb.dim(1), w = rgb.dim(2);
  nn::Tensor g({h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      g.at(y, x) = (rgb.at(0, y, x) + rgb.at(1, y, x) + rgb.at(2, y, x)) / 3.0;
  return g;
}

double sample_clamped(const nn::Tensor& img, double y, double x) {
  long h = img.dim(0), w = img.dim(1);
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  long x0 = static_cast<long>(std::floor(x)), y0 = static_cast<long>(std::floor(y));
  long x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

nn::Tensor downsample2(const nn::Tensor& img) {
  long h = img.dim(0), w = img.dim(1);
  long oh = h / 2, ow = w / 2;
  // 5-tap binomial blur then 2x decimation.
  static const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  nn::Tensor tmp({h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i)
        s += k[i + 2] * img.at(y, std::clamp(x + i, 0L, w - 1));
      tmp.at(y, x) = s;
    }
  nn::Tensor blur({h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i)
        s += k[i + 2] * tmp.at(std::clamp(y + i, 0L, h - 1), x);
      blur.at(y, x) = s;
    }
  nn::Tensor out({oh, ow});
  for (long y = 0; y < oh; ++y)
    for (long x = 0; x < ow; ++x) out.at(y, x) = blur.at(2 * y, 2 * x);
  return out;
}

/// One Horn-Schunck solve for the flow increment after warping.  Pixels whose
/// warp target fell outside the frame carry no data term (valid == 0); the
/// smoothness term extrapolates their motion from valid neighbours.
void hs_increment(const nn::Tensor& i1, const nn::Tensor& i2w, const nn::Tensor& valid,
                  nn::Tensor& du, nn::Tensor& dv, double alpha, int sweeps) {
  long h = i1.dim(0), w = i1.dim(1);
  nn::Tensor ix({h, w}), iy({h, w}), it({h, w});
  auto cat = [&](const nn::Tensor& img, long y, long x) {
    return img.at(std::clamp(y, 0L, h - 1), std::clamp(x, 0L, w - 1));
  };
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (valid.at(y, x) == 0.0) {
        ix.at(y, x) = iy.at(y, x) = it.at(y, x) = 0.0;
        continue;
      }
      double gx1 = 0.5 * (cat(i1, y, x + 1) - cat(i1, y, x - 1));
      double gx2 = 0.5 * (cat(i2w, y, x + 1) - cat(i2w, y, x - 1));
      double gy1 = 0.5 * (cat(i1, y + 1, x) - cat(i1, y - 1, x));
      double gy2 = 0.5 * (cat(i2w, y + 1, x) - cat(i2w, y - 1, x));
      ix.at(y, x) = 0.5 * (gx1 + gx2);
      iy.at(y, x) = 0.5 * (gy1 + gy2);
      it.at(y, x) = i2w.at(y, x) - i1.at(y, x);
    }
  du.fill(0.0);
  dv.fill(0.0);
  double a2 = alpha * alpha;
  nn::Tensor nu({h, w}), nv({h, w});
  for (int s = 0; s < sweeps; ++s) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double ubar = 0.25 * (cat(du, y - 1, x) + cat(du, y + 1, x) + cat(du, y, x - 1) +
                              cat(du, y, x + 1));
        double vbar = 0.25 * (cat(dv, y - 1, x) + cat(dv, y + 1, x) + cat(dv, y, x - 1) +
                              cat(dv, y, x + 1));
        double gx = ix.at(y, x), gy = iy.at(y, x);
        double num = gx * ubar + gy * vbar + it.at(y, x);
        double den = a2 + gx * gx + gy * gy;
        nu.at(y, x) = ubar - gx * num / den;
        nv.at(y, x) = vbar - gy * num / den;
      }
    std::swap(du, nu);
    std::swap(dv, nv);
  }
}

}  // namespace

FlowField classical_flow(const nn::Tensor& prev_rgb, const nn::Tensor& cur_rgb) {
  if (!prev_rgb.same_shape(cur_rgb)) throw Error("classical_flow: frame size mismatch");
  nn::Tensor g1 = to_gray(prev_rgb), g2 = to_gray(cur_rgb);

  std::vector<nn::Tensor> p1{g1}, p2{g2};
  while (static_cast<int>(p1.size()) < 3 && std::min(p1.back().dim(0), p1.back().dim(1)) >= 32) {
    p1.push_back(downsample2(p1.back()));
    p2.push_back(downsample2(p2.back()));
  }

  nn::Tensor u, v;
  for (int level = static_cast<int>(p1.size()) - 1; level >= 0; --level) {
    const nn::Tensor& i1 = p1[level];
    const nn::Tensor& i2 = p2[level];
    long h = i1.dim(0), w = i1.dim(1);
    if (!u.defined()) {
      u = nn::Tensor({h, w});
      v = nn::Tensor({h, w});
    } else {
      nn::Tensor us = nn::resize_bilinear_plain(u.reshaped({1, u.dim(0), u.dim(1)}), h, w);
      nn::Tensor vs = nn::resize_bilinear_plain(v.reshaped({1, v.dim(0), v.dim(1)}), h, w);
      u = us.reshaped({h, w});
      v = vs.reshaped({h, w});
      for (long i = 0; i < u.size(); ++i) {
        u[i] *= 2.0;
        v[i] *= 2.0;
      }
    }
    nn::Tensor i2w({h, w}), valid({h, w}), du({h, w}), dv({h, w});
    for (int warp = 0; warp < 5; ++warp) {
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          double ty = y + v.at(y, x), tx = x + u.at(y, x);
          valid.at(y, x) = (tx >= 0.0 && tx <= w - 1 && ty >= 0.0 && ty <= h - 1) ? 1.0 : 0.0;
          i2w.at(y, x) = sample_clamped(i2, ty, tx);
        }
      hs_increment(i1, i2w, valid, du, dv, 0.03, 25);
      double cap = static_cast<double>(std::max(h, w));
      for (long i = 0; i < u.size(); ++i) {
        u[i] = std::clamp(u[i] + du[i], -cap, cap);
        v[i] = std::clamp(v[i] + dv[i], -cap, cap);
      }
    }
  }

  FlowField f;
  f.vectors = nn::Tensor({2, u.dim(0), u.dim(1)});
  for (long y = 0; y < u.dim(0); ++y)
    for (long x = 0; x < u.dim(1); ++x) {
      f.vectors.at(0, y, x) = u.at(y, x);
      f.vectors.at(1, y, x) = v.at(y, x);
    }
  return f;
}

Offset2 mean_background_offset(const FlowField& flow, const nn::Tensor* mask,
                               const std::string& mode) {
  long h = flow.height(), w = flow.width();
  if (mask && (mask->dim(0) != h || mask->dim(1) != w))
    throw Error("mean_background_offset: mask size mismatch");
  double sx = 0.0, sy = 0.0;
  long bg = 0;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (mask && mask->at(y, x) > 0.5) continue;
      sx += flow.vectors.at(0, y, x);
      sy += flow.vectors.at(1, y, x);
      ++bg;
    }
  Offset2 o;
  if (mode == "paper_hw") {
    o.dx = sx / static_cast<double>(h * w);
    o.dy = sy / static_cast<double>(h * w);
  } else if (mode == "background_count") {
    if (bg > 0) {
      o.dx = sx / static_cast<double>(bg);
      o.dy = sy / static_cast<double>(bg);
    }
  } else {
    throw ConfigError("unknown offset normalization mode: " + mode);
  }
  return o;
}

namespace {

constexpr float kFloMagic = 202021.25f;

class ClassicalBackend : public FlowEstimator {
 public:
  FlowField estimate(const nn::Tensor& prev, const nn::Tensor& cur, const std::string&,
                     long) override {
    return classical_flow(prev, cur);
  }
};

class InjectedBackend : public FlowEstimator {
 public:
  explicit InjectedBackend(std::string root) : root_(std::move(root)) {}

  FlowField estimate(const nn::Tensor&, const nn::Tensor& cur, const std::string& clip_id,
                     long frame_index) override {
    ClipInfo& info = lookup(clip_id);
    if (frame_index < 0 || frame_index >= static_cast<long>(info.path.size()))
      throw DataError("injected flow: frame index " + std::to_string(frame_index) +
                      " outside camera path of " + clip_id);
    long h = cur.dim(1), w = cur.dim(2);
    double sx = static_cast<double>(w) / info.native_w;
    double sy = static_cast<double>(h) / info.native_h;
    FlowField f;
    f.vectors = nn::Tensor({2, h, w});
    double dx = info.path[frame_index][0] * sx, dy = info.path[frame_index][1] * sy;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        f.vectors.at(0, y, x) = dx;
        f.vectors.at(1, y, x) = dy;
      }
    return f;
  }

 private:
  struct ClipInfo {
    std::vector<std::array<double, 2>> path;
    long native_w = 0, native_h = 0;
  };

  ClipInfo& lookup(const std::string& clip_id) {
    auto it = cache_.find(clip_id);
    if (it != cache_.end()) return it->second;
    ClipInfo info;
    info.path = read_camera_path(root_, clip_id);
    ImageU8 first =
        read_png((fs::path(root_) / "clips" / clip_id / "frames" / "000000.png").string());
    info.native_w = first.width;
    info.native_h = first.height;
    return cache_.emplace(clip_id, std::move(info)).first->second;
  }

  std::string root_;
  std::map<std::string, ClipInfo> cache_;
};

class ExternalBackend : public FlowEstimator {
 public:
  explicit ExternalBackend(std::string root) : root_(std::move(root)) {}

  FlowField estimate(const nn::Tensor&, const nn::Tensor& cur, const std::string& clip_id,
                     long frame_index) override {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06ld.flo", frame_index);
    fs::path path = fs::path(root_) / "clips" / clip_id / "flow" / buf;
    FlowField f = read_flo(path.string());
    long h = cur.dim(1), w = cur.dim(2);
    if (f.height() == h && f.width() == w) return f;
    // Resample to the working resolution, scaling the vectors with the grid.
    double sx = static_cast<double>(w) / f.width(), sy = static_cast<double>(h) / f.height();
    nn::Tensor r = nn::resize_bilinear_plain(f.vectors, h, w);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        r.at(0, y, x) *= sx;
        r.at(1, y, x) *= sy;
      }
    return {r};
  }

 private:
  std::string root_;
};

}  // namespace

std::unique_ptr<FlowEstimator> make_flow_estimator(const ModelConfig& cfg,
                                                   const std::string& data_root) {
  if (cfg.flow_backend == "classical") return std::make_unique<ClassicalBackend>();
  if (cfg.flow_backend == "injected") return std::make_unique<InjectedBackend>(data_root);
  if (cfg.flow_backend == "external") return std::make_unique<ExternalBackend>(data_root);
  throw ConfigError("unknown flow backend: " + cfg.flow_backend);
}

FlowField read_flo(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open flow file: " + path);
  float magic = 0;
  std::int32_t w = 0, h = 0;
  bool ok = std::fread(&magic, 4, 1, f) == 1 && std::fread(&w, 4, 1, f) == 1 &&
            std::fread(&h, 4, 1, f) == 1;
  if (!ok || magic != kFloMagic || w <= 0 || h <= 0) {
    std::fclose(f);
    throw DataError("bad flow file header: " + path);
  }
  std::vector<float> raw(static_cast<size_t>(w) * h * 2);
  ok = std::fread(raw.data(), 4, raw.size(), f) == raw.size();
  std::fclose(f);
  if (!ok) throw DataError("truncated flow file: " + path);
  FlowField out;
  out.vectors = nn::Tensor({2, h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      out.vectors.at(0, y, x) = raw[(y * w + x) * 2];
      out.vectors.at(1, y, x) = raw[(y * w + x) * 2 + 1];
    }
  return out;
}

void write_flo(const std::string& path, const FlowField& flow) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot create flow file: " + path);
  std::int32_t w = static_cast<std::int32_t>(flow.width());
  std::int32_t h = static_cast<std::int32_t>(flow.height());
  std::fwrite(&kFloMagic, 4, 1, f);
  std::fwrite(&w, 4, 1, f);
  std::fwrite(&h, 4, 1, f);
  std::vector<float> raw(static_cast<size_t>(w) * h * 2);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      raw[(y * w + x) * 2] = static_cast<float>(flow.vectors.at(0, y, x));
      raw[(y * w + x) * 2 + 1] = static_cast<float>(flow.vectors.at(1, y, x));
    }
  std::fwrite(raw.data(), 4, raw.size(), f);
  std::fclose(f);
}

}  // namespace hemodet
