#include "hemodet/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hemodet/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hemodet {

namespace {

struct Wave {
  double kx, ky, phase[3], amp;
};

std::string frame_name(long idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06ld.png", idx);
  return buf;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

void validate_synth_spec(const SynthSpec& spec) {
  if (spec.n_frames < 1) throw Error("synth spec: n_frames must be >= 1");
  if (spec.height < 16 || spec.width < 16) throw Error("synth spec: image too small");
  if (static_cast<long>(spec.camera_path.size()) != spec.n_frames ||
      static_cast<long>(spec.source_point_path.size()) != spec.n_frames)
    throw Error("synth spec: per-frame paths must have n_frames entries");
  if (spec.bleed_onset >= spec.n_frames) throw Error("synth spec: bleed_onset out of range");
  double cap = 0.05 * std::min(spec.height, spec.width);
  for (const auto& d : spec.camera_path)
    if (std::abs(d[0]) > cap || std::abs(d[1]) > cap)
      throw Error("synth spec: per-frame camera displacement exceeds 5% of image size");
  if (spec.region_growth_rate <= 0) throw Error("synth spec: growth rate must be positive");
}

SynthClip synth_clip(const SynthSpec& spec, RngStream rng) {
  validate_synth_spec(spec);
  long h = spec.height, w = spec.width;

  // Analytic texture: sum of sinusoids evaluated at content coordinates
  // p - C_t, so integer and fractional camera motion are both exact.
  std::vector<Wave> waves;
  for (int j = 0; j < 4; ++j) {
    Wave wv;
    double wavelength = rng.uniform(8.0, 24.0);
    // stratify orientations so the texture always has gradient energy on
    // both axes (a pure-horizontal texture would leave vertical flow
    // unconstrained)
    double angle = (j + rng.uniform(0.0, 1.0)) * (M_PI / 4.0);
    wv.kx = 2.0 * M_PI / wavelength * std::cos(angle);
    wv.ky = 2.0 * M_PI / wavelength * std::sin(angle);
    for (int c = 0; c < 3; ++c) wv.phase[c] = rng.uniform(0.0, 2.0 * M_PI);
    wv.amp = rng.uniform(0.06, 0.11);
    waves.push_back(wv);
  }

  SynthClip out;
  out.clip.clip_id = "synthetic";
  out.clip.fps_tag = 2.0;
  out.camera_path = spec.camera_path;

  double cum_x = 0.0, cum_y = 0.0;
  for (long t = 0; t < spec.n_frames; ++t) {
    cum_x += spec.camera_path[t][0];
    cum_y += spec.camera_path[t][1];

    bool bleeding = t >= spec.bleed_onset;
    double cx = spec.source_point_path[t][0];
    double cy = spec.source_point_path[t][1];
    double rx = 0.0, ry = 0.0;
    if (bleeding) {
      rx = spec.region_growth_rate * static_cast<double>(t - spec.bleed_onset + 1);
      ry = 0.7 * rx;
    }

    ImageFrameData frame;
    frame.clip_id = out.clip.clip_id;
    frame.frame_index = t;
    frame.pixels = nn::Tensor({3, h, w});
    nn::Tensor mask({h, w});
    long area = 0;

    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double u = x - cum_x, v = y - cum_y;
        double col[3];
        for (int c = 0; c < 3; ++c) {
          double s = 0.55;
          for (const Wave& wv : waves)
            s += wv.amp * std::sin(wv.kx * u + wv.ky * v + wv.phase[c]);
          col[c] = s;
        }
        bool inside = false;
        if (bleeding) {
          double ex = (x - cx) / rx, ey = (y - cy) / ry;
          inside = ex * ex + ey * ey <= 1.0;
        }
        if (inside) {
          mask.at(y, x) = 1.0;
          ++area;
          col[0] = 0.6 * col[0] + 0.4 * 0.85;
          col[1] = 0.6 * col[1] + 0.4 * 0.10;
          col[2] = 0.6 * col[2] + 0.4 * 0.08;
        }
        for (int c = 0; c < 3; ++c) frame.pixels.at(c, y, x) = quantize(col[c]);
      }

    BleedAnnotationData ann;
    if (bleeding && area > 0) {
      ann.has_region = true;
      ann.mask = mask;
      ann.has_point = true;
      ann.point_x = std::clamp(cx, 0.0, static_cast<double>(w - 1));
      ann.point_y = std::clamp(cy, 0.0, static_cast<double>(h - 1));
    }
    out.clip.frames.push_back(std::move(frame));
    out.clip.annotations.push_back(std::move(ann));
  }
  return out;
}

SynthSpec make_synth_spec(long n_frames, long height, long width, const std::string& motion,
                          RngStream& rng) {
  SynthSpec spec;
  spec.n_frames = n_frames;
  spec.height = height;
  spec.width = width;
  spec.bleed_onset = std::min<long>(n_frames - 1, std::max<long>(1, n_frames / 4));
  spec.region_growth_rate = rng.uniform(0.8, 1.4);
  spec.texture_seed = static_cast<long>(rng.next_u64() >> 33);

  double drift_cap = 0.12 * std::min(height, width);
  // Integer per-frame steps, capped at 5% of the short image side.
  long max_step = std::min<long>(2, static_cast<long>(0.05 * std::min(height, width)));
  max_step = std::max<long>(1, max_step);
  double cum_x = 0.0, cum_y = 0.0;
  spec.camera_path.push_back({0.0, 0.0});
  for (long t = 1; t < n_frames; ++t) {
    double dx = 0.0, dy = 0.0;
    if (motion == "pan") {
      dx = static_cast<double>(max_step);
      dy = static_cast<double>(std::max<long>(1, max_step / 2));
    } else if (motion == "drift") {
      dx = static_cast<double>(rng.uniform_int(2 * max_step + 1) - max_step);
      dy = static_cast<double>(rng.uniform_int(2 * max_step + 1) - max_step);
    } else if (motion != "static") {
      throw Error("unknown motion profile: " + motion);
    }
    if (std::abs(cum_x + dx) > drift_cap) dx = -dx;
    if (std::abs(cum_y + dy) > drift_cap) dy = -dy;
    cum_x += dx;
    cum_y += dy;
    spec.camera_path.push_back({dx, dy});
  }

  // Source point locked to the moving tissue: frame position = start + C_t.
  double px = width * rng.uniform(0.42, 0.58);
  double py = height * rng.uniform(0.42, 0.58);
  cum_x = cum_y = 0.0;
  for (long t = 0; t < n_frames; ++t) {
    cum_x += spec.camera_path[t][0];
    cum_y += spec.camera_path[t][1];
    spec.source_point_path.push_back({px + cum_x, py + cum_y});
  }
  return spec;
}

void write_clip(const std::string& root, const SynthClip& sc) {
  fs::path dir = fs::path(root) / "clips" / sc.clip.clip_id;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");

  json frames = json::array();
  for (long t = 0; t < sc.clip.size(); ++t) {
    const ImageFrameData& f = sc.clip.frames[t];
    const BleedAnnotationData& a = sc.clip.annotations[t];
    write_png((dir / "frames" / frame_name(t)).string(), tensor_to_image(f.pixels));
    if (a.has_region) write_mask_png((dir / "masks" / frame_name(t)).string(), a.mask);
    json rec;
    rec["idx"] = t;
    rec["point"] = a.has_point ? json::array({a.point_x, a.point_y}) : json();
    rec["has_region"] = a.has_region;
    frames.push_back(rec);
  }
  json ann;
  ann["fps"] = sc.clip.fps_tag;
  ann["frames"] = frames;
  std::ofstream((dir / "annotations.json").string()) << ann.dump(2) << "\n";

  json flow;
  flow["camera_path"] = json::array();
  for (const auto& d : sc.camera_path) flow["camera_path"].push_back({d[0], d[1]});
  std::ofstream((dir / "flow.json").string()) << flow.dump(2) << "\n";
}

std::vector<std::array<double, 2>> read_camera_path(const std::string& root,
                                                    const std::string& clip_id) {
  fs::path path = fs::path(root) / "clips" / clip_id / "flow.json";
  std::ifstream in(path);
  if (!in) throw DataError("no flow sidecar: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed flow.json for " + clip_id + ": " + e.what());
  }
  std::vector<std::array<double, 2>> out;
  for (const json& d : j.at("camera_path"))
    out.push_back({d[0].get<double>(), d[1].get<double>()});
  return out;
}

void synth_dataset(const std::string& root, long n_clips, long n_frames, long height,
                   long width, const std::string& motion, long seed) {
  RngStream rng(static_cast<std::uint64_t>(seed));
  std::vector<std::string> ids;
  for (long i = 0; i < n_clips; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "clip%03ld", i);
    std::string id = buf;
    RngStream crng = rng.split("synth/" + id);
    SynthSpec spec = make_synth_spec(n_frames, height, width, motion, crng);
    SynthClip sc = synth_clip(spec, RngStream(static_cast<std::uint64_t>(spec.texture_seed)));
    sc.clip.clip_id = id;
    for (auto& f : sc.clip.frames) f.clip_id = id;
    write_clip(root, sc);
    ids.push_back(id);
  }
  long n_test = std::max<long>(1, n_clips / 4);
  json splits;
  splits["train"] = json::array();
  splits["test"] = json::array();
  for (long i = 0; i < n_clips; ++i) {
    if (i < n_clips - n_test)
      splits["train"].push_back(ids[i]);
    else
      splits["test"].push_back(ids[i]);
  }
  std::ofstream((fs::path(root) / "splits.json").string()) << splits.dump(2) << "\n";
}

}  // namespace hemodet
