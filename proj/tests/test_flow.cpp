#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hemodet/flow.hpp"
#include "hemodet/synth.hpp"

using namespace hemodet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hemodet_flow_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

FlowField uniform_flow(long h, long w, double dx, double dy) {
  FlowField f;
  f.vectors = nn::Tensor({2, h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      f.vectors.at(0, y, x) = dx;
      f.vectors.at(1, y, x) = dy;
    }
  return f;
}

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("mean background offset arithmetic") {
  // 2x2 image, uniform flow (2,0), mask covering 2 pixels
  FlowField f = uniform_flow(2, 2, 2.0, 0.0);
  nn::Tensor mask({2, 2});
  mask.at(0, 0) = 1.0;
  mask.at(0, 1) = 1.0;

  Offset2 hw = mean_background_offset(f, &mask, "paper_hw");
  CHECK(hw.dx == doctest::Approx(1.0));
  CHECK(hw.dy == doctest::Approx(0.0));

  Offset2 bc = mean_background_offset(f, &mask, "background_count");
  CHECK(bc.dx == doctest::Approx(2.0));
  CHECK(bc.dy == doctest::Approx(0.0));

  // all-ones mask -> (0,0) in both modes
  nn::Tensor full = nn::Tensor::full({2, 2}, 1.0);
  Offset2 z1 = mean_background_offset(f, &full, "paper_hw");
  Offset2 z2 = mean_background_offset(f, &full, "background_count");
  CHECK(z1.dx == 0.0);
  CHECK(z2.dx == 0.0);

  // no mask -> plain mean in both modes
  FlowField g = uniform_flow(3, 3, 2.0, -3.0);
  Offset2 m1 = mean_background_offset(g, nullptr, "paper_hw");
  Offset2 m2 = mean_background_offset(g, nullptr, "background_count");
  CHECK(m1.dx == doctest::Approx(2.0));
  CHECK(m1.dy == doctest::Approx(-3.0));
  CHECK(m2.dx == doctest::Approx(2.0));
  CHECK(m2.dy == doctest::Approx(-3.0));

  CHECK_THROWS_AS(mean_background_offset(f, nullptr, "bogus"), ConfigError);
}

TEST_CASE("offset is linear and negation-equivariant") {
  FlowField f = uniform_flow(4, 4, 1.5, -0.5);
  nn::Tensor mask({4, 4});
  mask.at(1, 1) = 1.0;
  Offset2 o = mean_background_offset(f, &mask, "paper_hw");
  FlowField neg = f;
  neg.vectors = f.vectors.clone();
  for (long i = 0; i < neg.vectors.size(); ++i) neg.vectors[i] = -neg.vectors[i];
  Offset2 on = mean_background_offset(neg, &mask, "paper_hw");
  CHECK(on.dx == doctest::Approx(-o.dx));
  CHECK(on.dy == doctest::Approx(-o.dy));

  // paper_hw = background_fraction * background_count for uniform flow
  Offset2 oc = mean_background_offset(f, &mask, "background_count");
  CHECK(o.dx == doctest::Approx(oc.dx * 15.0 / 16.0));
}

TEST_CASE("identical frames give near-zero flow") {
  RngStream rng(21);
  SynthSpec spec = make_synth_spec(3, 64, 64, "static", rng);
  spec.bleed_onset = 2;  // frames 0 and 1 are bleed-free and byte-identical
  SynthClip sc = synth_clip(spec, RngStream(3));
  FlowField f = classical_flow(sc.clip.frames[0].pixels, sc.clip.frames[1].pixels);
  CHECK(f.vectors.abs_max() < 1e-3);
}

TEST_CASE("classical flow recovers a pure translation") {
  RngStream rng(22);
  SynthSpec spec = make_synth_spec(3, 96, 96, "static", rng);
  // camera pans between frames 1 and 2; the bleed region starts at frame 1 and
  // stays inside frame 2's mask, so background brightness constancy holds
  spec.camera_path[2] = {3.0, -2.0};
  spec.bleed_onset = 1;
  spec.source_point_path = {{48.0, 48.0}, {48.0, 48.0}, {51.0, 46.0}};
  spec.region_growth_rate = 2.0;
  SynthClip sc = synth_clip(spec, RngStream(5));

  FlowField f = classical_flow(sc.clip.frames[1].pixels, sc.clip.frames[2].pixels);
  const nn::Tensor& m = sc.clip.annotations[2].mask;
  Offset2 o = mean_background_offset(f, &m, "background_count");
  CHECK(std::abs(o.dx - 3.0) < 0.5);
  CHECK(std::abs(o.dy + 2.0) < 0.5);
}

TEST_CASE("flo file round trip") {
  TempDir tmp("flo");
  FlowField f = uniform_flow(3, 5, 1.25, -2.5);
  f.vectors.at(0, 1, 2) = 7.5;
  std::string p = (tmp.path / "t.flo").string();
  write_flo(p, f);
  FlowField back = read_flo(p);
  CHECK(back.height() == 3);
  CHECK(back.width() == 5);
  for (long i = 0; i < f.vectors.size(); ++i)
    CHECK(back.vectors[i] == doctest::Approx(f.vectors[i]));
  CHECK_THROWS_AS(read_flo((tmp.path / "missing.flo").string()), DataError);
}

TEST_CASE("injected backend returns the sidecar camera path") {
  TempDir tmp("inj");
  synth_dataset(tmp.path.string(), 1, 6, 48, 48, "drift", 9);
  ModelConfig cfg;
  cfg.flow_backend = "injected";
  auto est = make_flow_estimator(cfg, tmp.path.string());
  auto path = read_camera_path(tmp.path.string(), "clip000");

  nn::Tensor dummy({3, 48, 48});
  for (long t = 1; t < 6; ++t) {
    FlowField f = est->estimate(dummy, dummy, "clip000", t);
    CHECK(f.vectors.at(0, 10, 10) == doctest::Approx(path[t][0]));
    CHECK(f.vectors.at(1, 10, 10) == doctest::Approx(path[t][1]));
  }

  // at half resolution the vectors scale with the grid
  nn::Tensor half({3, 24, 24});
  FlowField fh = est->estimate(half, half, "clip000", 1);
  CHECK(fh.vectors.at(0, 5, 5) == doctest::Approx(path[1][0] * 0.5));
}

TEST_CASE("external backend reads flo files") {
  TempDir tmp("ext");
  synth_dataset(tmp.path.string(), 1, 3, 32, 32, "static", 4);
  fs::create_directories(tmp.path / "clips" / "clip000" / "flow");
  FlowField f = uniform_flow(32, 32, 1.0, 2.0);
  write_flo((tmp.path / "clips" / "clip000" / "flow" / "000001.flo").string(), f);

  ModelConfig cfg;
  cfg.flow_backend = "external";
  auto est = make_flow_estimator(cfg, tmp.path.string());
  nn::Tensor dummy({3, 32, 32});
  FlowField got = est->estimate(dummy, dummy, "clip000", 1);
  CHECK(got.vectors.at(0, 3, 3) == doctest::Approx(1.0));
  CHECK(got.vectors.at(1, 3, 3) == doctest::Approx(2.0));
  CHECK_THROWS_AS(est->estimate(dummy, dummy, "clip000", 2), DataError);
}

}  // TEST_SUITE
