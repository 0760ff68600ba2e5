#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hemodet/dataset.hpp"
#include "hemodet/image_io.hpp"
#include "hemodet/synth.hpp"

using namespace hemodet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hemodet_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SynthSpec small_spec() {
  RngStream rng(11);
  return make_synth_spec(12, 48, 64, "drift", rng);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("png round trip preserves bytes") {
  TempDir tmp("png");
  ImageU8 img(5, 7, 3);
  for (long y = 0; y < 5; ++y)
    for (long x = 0; x < 7; ++x)
      for (long c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>((y * 7 + x) * 3 + c);
  std::string p = (tmp.path / "t.png").string();
  write_png(p, img);
  ImageU8 back = read_png(p);
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(read_png((tmp.path / "missing.png").string()), DataError);
}

TEST_CASE("mask png binarization at 128") {
  TempDir tmp("mask");
  ImageU8 gray(2, 3, 1);
  std::uint8_t vals[6] = {0, 127, 128, 200, 255, 50};
  for (long i = 0; i < 6; ++i) gray.pixels[i] = vals[i];
  std::string p = (tmp.path / "m.png").string();
  write_png(p, gray);
  nn::Tensor m = read_mask_png(p);
  double expect[6] = {0, 0, 1, 1, 1, 0};
  for (long i = 0; i < 6; ++i) CHECK(m[i] == expect[i]);
}

TEST_CASE("edge derivation from masks") {
  // all-zero mask -> all-zero edge
  nn::Tensor zero({8, 8});
  CHECK(derive_edge_map(zero).sum() == 0.0);

  // all-one mask -> all-zero edge (replicated borders)
  nn::Tensor one = nn::Tensor::full({8, 8}, 1.0);
  CHECK(derive_edge_map(one).sum() == 0.0);

  // single pixel at (5,5) -> 3x3 block of ones centered there
  nn::Tensor single({12, 12});
  single.at(5, 5) = 1.0;
  nn::Tensor e = derive_edge_map(single);
  CHECK(e.sum() == 9.0);
  for (long y = 4; y <= 6; ++y)
    for (long x = 4; x <= 6; ++x) CHECK(e.at(y, x) == 1.0);

  // edge is inside dilate(mask) and disjoint from erode(mask): for a solid
  // square, the edge is the boundary ring
  nn::Tensor sq({10, 10});
  for (long y = 3; y <= 6; ++y)
    for (long x = 3; x <= 6; ++x) sq.at(y, x) = 1.0;
  nn::Tensor es = derive_edge_map(sq);
  CHECK(es.at(4, 4) == 0.0);  // interior of erosion
  CHECK(es.at(3, 3) == 1.0);
  CHECK(es.at(2, 3) == 1.0);  // dilated ring outside the square
  CHECK(es.at(0, 0) == 0.0);
}

TEST_CASE("window sampler counts") {
  auto w10 = window_sampler(10, 8);
  REQUIRE(w10.size() == 10);
  long full = 0, warm = 0;
  for (const auto& w : w10) (w.length() == 8 ? full : warm)++;
  CHECK(full == 3);
  CHECK(warm == 7);
  CHECK(w10[9].begin == 2);
  CHECK(w10[9].end == 9);

  auto w8 = window_sampler(8, 8);
  REQUIRE(w8.size() == 8);
  CHECK(w8.back().length() == 8);

  auto w1 = window_sampler(1, 8);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0].length() == 1);

  CHECK(window_sampler(0, 8).empty());
}

TEST_CASE("synthetic clip determinism and ground truth") {
  SynthSpec spec = small_spec();
  SynthClip a = synth_clip(spec, RngStream(99));
  SynthClip b = synth_clip(spec, RngStream(99));
  REQUIRE(a.clip.size() == spec.n_frames);
  for (long t = 0; t < a.clip.size(); ++t)
    for (long i = 0; i < a.clip.frames[t].pixels.size(); ++i)
      CHECK(a.clip.frames[t].pixels[i] == b.clip.frames[t].pixels[i]);

  // mask/point appear only after onset and the point sits inside the mask
  for (long t = 0; t < a.clip.size(); ++t) {
    const auto& ann = a.clip.annotations[t];
    if (t < spec.bleed_onset) {
      CHECK(!ann.has_region);
      CHECK(!ann.has_point);
    } else if (ann.has_region) {
      CHECK(ann.mask.sum() > 0);
      CHECK(ann.has_point);
    }
  }
  CHECK_NOTHROW(validate_clip(a.clip));
}

TEST_CASE("static camera repeats background exactly") {
  RngStream rng(12);
  SynthSpec spec = make_synth_spec(6, 32, 32, "static", rng);
  spec.bleed_onset = 5;  // keep most frames bleed-free
  SynthClip sc = synth_clip(spec, RngStream(7));
  for (long t = 1; t < 5; ++t)
    for (long i = 0; i < sc.clip.frames[t].pixels.size(); ++i)
      CHECK(sc.clip.frames[t].pixels[i] == sc.clip.frames[0].pixels[i]);
}

TEST_CASE("integer pan shifts content exactly") {
  RngStream rng(13);
  SynthSpec spec = make_synth_spec(4, 80, 80, "static", rng);
  for (long t = 1; t < 4; ++t) spec.camera_path[t] = {3.0, -2.0};
  // recompute the locked source path for the new camera
  spec.source_point_path.assign(4, {40.0, 40.0});
  spec.bleed_onset = 3;
  SynthClip sc = synth_clip(spec, RngStream(7));
  const auto& f0 = sc.clip.frames[0].pixels;
  const auto& f1 = sc.clip.frames[1].pixels;
  // content at (x,y) in frame 1 came from (x-3, y+2) in frame 0
  for (long c = 0; c < 3; ++c)
    for (long y = 0; y < 78; ++y)
      for (long x = 3; x < 80; ++x)
        CHECK(f1.at(c, y, x) == doctest::Approx(f0.at(c, y + 2, x - 3)).epsilon(1e-12));
}

TEST_CASE("dataset write, load and validation") {
  TempDir tmp("ds");
  synth_dataset(tmp.path.string(), 3, 10, 48, 48, "drift", 42);

  auto ids = list_clip_ids(tmp.path.string());
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == "clip000");

  SplitLists splits = load_splits(tmp.path.string());
  CHECK(splits.train.size() == 2);
  CHECK(splits.test.size() == 1);

  Clip c = load_clip(tmp.path.string(), "clip001");
  CHECK(c.size() == 10);
  CHECK(c.height() == 48);
  CHECK_NOTHROW(validate_clip(c));

  auto path = read_camera_path(tmp.path.string(), "clip001");
  CHECK(path.size() == 10);
  CHECK(path[0][0] == 0.0);

  // occluded-point record: region without point parses as has_point=false
  {
    auto ann_path = tmp.path / "clips" / "clip001" / "annotations.json";
    std::ifstream in(ann_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    size_t pos = text.rfind("\"point\": [");
    REQUIRE(pos != std::string::npos);
    size_t end = text.find("]", pos);
    text.replace(pos, end - pos + 1, "\"point\": null");
    std::ofstream(ann_path) << text;
  }
  Clip c2 = load_clip(tmp.path.string(), "clip001");
  bool saw_occluded = false;
  for (long t = 0; t < c2.size(); ++t)
    if (c2.annotations[t].has_region && !c2.annotations[t].has_point) saw_occluded = true;
  CHECK(saw_occluded);
}

TEST_CASE("loader rejects malformed clips") {
  TempDir tmp("bad");
  synth_dataset(tmp.path.string(), 1, 4, 48, 48, "static", 1);

  CHECK_THROWS_AS(load_clip(tmp.path.string(), "nope"), DataError);

  // truncate a frame file -> decode error mentioning the clip
  auto frame = tmp.path / "clips" / "clip000" / "frames" / "000002.png";
  fs::resize_file(frame, 10);
  CHECK_THROWS_AS(load_clip(tmp.path.string(), "clip000"), DataError);
}

TEST_CASE("synth dataset reruns are byte-identical") {
  TempDir a("det_a"), b("det_b");
  synth_dataset(a.path.string(), 2, 6, 32, 32, "drift", 7);
  synth_dataset(b.path.string(), 2, 6, 32, 32, "drift", 7);
  for (auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    fs::path rel = fs::relative(e.path(), a.path);
    std::ifstream fa(e.path(), std::ios::binary), fb(b.path / rel, std::ios::binary);
    REQUIRE(fb.good());
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(da == db);
  }
}

TEST_CASE("drawing primitives stay in bounds") {
  ImageU8 img(20, 20, 3);
  draw_cross(img, 2, 2, 5, 255, 0, 0);    // clips at border
  draw_circle(img, 18, 18, 6, 0, 255, 0);  // clips at border
  draw_text(img, 1, 12, "0.95", 255, 255, 255);
  nn::Tensor m({20, 20});
  m.at(5, 5) = 1.0;
  blend_mask(img, m, 0, 0, 255, 0.5);
  CHECK(img.at(5, 5, 2) == 128);  // 0*(0.5) + 255*0.5, rounded half up
  CHECK(img.at(2, 2, 0) == 255);
}

}  // TEST_SUITE
