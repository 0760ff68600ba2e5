#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "hemodet/detector.hpp"
#include "hemodet/errors.hpp"
#include "hemodet/synth.hpp"

using namespace hemodet;

namespace {

ModelConfig tiny_config(long resolution = 32) {
  ModelConfig cfg;
  cfg.input_resolution = resolution;
  cfg.channels_coarse = 16;
  cfg.channels_quarter = 8;
  cfg.channels_eighth = 12;
  cfg.seed = 11;
  return cfg;
}

nn::Tensor random_frame(long h, long w, uint64_t seed) {
  RngStream rng(seed);
  nn::Tensor img({3, h, w});
  for (long i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  return img;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("backbone shape contract and determinism") {
  ModelConfig cfg = tiny_config(64);
  nn::ParamStore ps;
  RngStream rng(3);
  Backbone bb(ps, cfg, rng);

  nn::Tensor img = random_frame(64, 64, 5);
  FeaturePyramid fp = bb.encode(img, 0);
  CHECK(fp.tokens.value().dim(0) == 16);  // (64/16)^2 tokens
  CHECK(fp.tokens.value().dim(1) == 16);
  CHECK(fp.f2.value().dim(0) == 12);
  CHECK(fp.f2.value().dim(1) == 8);
  CHECK(fp.f1.value().dim(0) == 8);
  CHECK(fp.f1.value().dim(1) == 16);
  CHECK(fp.grid_h == 4);

  FeaturePyramid fp2 = bb.encode(img, 0);
  for (long i = 0; i < fp.tokens.value().size(); ++i)
    CHECK(fp.tokens.value()[i] == fp2.tokens.value()[i]);

  nn::Tensor zero = nn::Tensor::zeros({3, 64, 64});
  FeaturePyramid fpz = bb.encode(zero, 0);
  CHECK(fpz.tokens.value().all_finite());
  CHECK(fpz.f1.value().all_finite());

  nn::Tensor bad = img.clone();
  bad[7] = std::nan("");
  CHECK_THROWS_AS(bb.encode(bad, 0), DataError);
  CHECK_THROWS_AS(bb.encode(random_frame(24, 24, 1), 0), Error);

  auto pyr = bb.encode_window({img, zero}, 4);
  CHECK(pyr.size() == 2);
  CHECK(pyr[1].frame_index == 5);
}

TEST_CASE("backbone gradients reach the stem") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(3);
  Backbone bb(ps, cfg, rng);
  FeaturePyramid fp = bb.encode(random_frame(32, 32, 6), 0);
  nn::backward(nn::sum(fp.tokens));
  nn::Var* w = ps.find("backbone.stem1.weight");
  REQUIRE(w != nullptr);
  REQUIRE(w->has_grad());
  CHECK(w->grad().abs_max() > 0.0);
}

TEST_CASE("memory banks are capacity-bounded FIFOs") {
  MaskMemoryBank mb(7);
  for (long k = 0; k < 9; ++k)
    mb.push({nn::constant(nn::Tensor::zeros({4, 16})), nn::Tensor::zeros({32, 32}), k});
  CHECK(mb.size() == 7);
  CHECK(mb.entries().front().frame_index == 2);
  CHECK(mb.entries().back().frame_index == 8);
  long prev = -1;
  for (const auto& e : mb.entries()) {
    CHECK(e.frame_index > prev);
    prev = e.frame_index;
  }
  CHECK_THROWS_AS(mb.push({nn::constant(nn::Tensor::zeros({4, 16})), nn::Tensor(), 8}), Error);
  mb.clear();
  CHECK(mb.size() == 0);

  PointMemoryBank pb(7);
  for (long k = 0; k < 9; ++k) pb.push({nn::constant(nn::Tensor::zeros({4, 16})), {}, k});
  CHECK(pb.size() == 7);
  CHECK(pb.entries().front().frame_index == 2);
}

TEST_CASE("mask memory attention shape, determinism, reset equivalence") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(3);
  Backbone bb(ps, cfg, rng);
  MaskBranch mb(ps, cfg, rng);

  FeaturePyramid fp = bb.encode(random_frame(32, 32, 7), 3);
  MaskMemoryBank bank(cfg.memory_capacity);

  nn::Var empty1 = mb.attend_memory(fp, bank);
  nn::Var empty2 = mb.attend_memory(fp, bank);
  CHECK(empty1.value().same_shape(fp.tokens.value()));
  for (long i = 0; i < empty1.value().size(); ++i)
    CHECK(empty1.value()[i] == empty2.value()[i]);

  RngStream mrng(9);
  for (long k = 0; k < 7; ++k)
    bank.push({nn::constant(hdtest::random_tensor({4, 16}, mrng, 0.3)),
               nn::Tensor::zeros({32, 32}), k});
  nn::Var full = mb.attend_memory(fp, bank);
  CHECK(full.value().same_shape(fp.tokens.value()));
  double diff = 0;
  for (long i = 0; i < full.value().size(); ++i)
    diff = std::max(diff, std::abs(full.value()[i] - empty1.value()[i]));
  CHECK(diff > 1e-8);  // cross term engaged

  bank.clear();
  nn::Var again = mb.attend_memory(fp, bank);
  for (long i = 0; i < again.value().size(); ++i)
    CHECK(again.value()[i] == empty1.value()[i]);

  bank.push({nn::constant(nn::Tensor::zeros({4, 5})), nn::Tensor::zeros({32, 32}), 0});
  CHECK_THROWS_AS(mb.attend_memory(fp, bank), Error);
}

TEST_CASE("edge generator: zero input collapses to the output bias") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(4);
  MaskBranch mb(ps, cfg, rng);
  ps.find("maskbranch.eg_out.bias")->node()->value.fill(0.37);

  nn::Var f_mask = nn::constant(nn::Tensor::zeros({4, 16}));
  nn::Var f1 = nn::constant(nn::Tensor::zeros({8, 8, 8}));
  nn::Var f2 = nn::constant(nn::Tensor::zeros({12, 4, 4}));
  auto [edge, gated] = mb.edge_generate(f_mask, 2, 2, f1, f2);
  CHECK(edge.value().dim(1) == 8);
  CHECK(edge.value().dim(2) == 8);
  for (long i = 0; i < edge.value().size(); ++i)
    CHECK(edge.value()[i] == doctest::Approx(0.37).epsilon(1e-12));
  for (long i = 0; i < gated.value().size(); ++i) CHECK(gated.value()[i] == 0.0);
}

TEST_CASE("edge generator gradient matches finite differences") {
  ModelConfig cfg = tiny_config(32);
  cfg.channels_coarse = 8;
  cfg.channels_quarter = 4;
  cfg.channels_eighth = 6;
  nn::ParamStore ps;
  RngStream rng(4);
  MaskBranch mb(ps, cfg, rng);

  RngStream drng(8);
  nn::Tensor fm = hdtest::random_tensor({4, 8}, drng, 0.5);
  nn::Tensor f1 = hdtest::random_tensor({4, 8, 8}, drng, 0.5);
  nn::Tensor f2 = hdtest::random_tensor({6, 4, 4}, drng, 0.5);
  auto f = [&](std::vector<nn::Var>& v) {
    auto [edge, gated] = mb.edge_generate(v[0], 2, 2, v[1], v[2]);
    return nn::add(nn::sum(edge), nn::sum(gated));
  };
  CHECK(hdtest::max_grad_err(f, {fm, f1, f2}) < 1e-3);
}

TEST_CASE("edge generator uses the high-resolution maps") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(4);
  MaskBranch mb(ps, cfg, rng);
  RngStream drng(9);
  nn::Var fm = nn::constant(hdtest::random_tensor({4, 16}, drng, 0.5));
  nn::Var z1 = nn::constant(nn::Tensor::zeros({8, 8, 8}));
  nn::Var z2 = nn::constant(nn::Tensor::zeros({12, 4, 4}));
  nn::Var r1 = nn::constant(hdtest::random_tensor({8, 8, 8}, drng, 0.5));
  nn::Var r2 = nn::constant(hdtest::random_tensor({12, 4, 4}, drng, 0.5));
  auto [e_zero, g0] = mb.edge_generate(fm, 2, 2, z1, z2);
  auto [e_rand, g1] = mb.edge_generate(fm, 2, 2, r1, r2);
  double diff = 0;
  for (long i = 0; i < e_zero.value().size(); ++i)
    diff = std::max(diff, std::abs(e_zero.value()[i] - e_rand.value()[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("prompt encoding lands on the coarse grid and handles absent points") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(5);
  MaskBranch mb(ps, cfg, rng);

  RngStream drng(10);
  nn::Var edge = nn::constant(hdtest::random_tensor({1, 8, 8}, drng, 0.5));
  auto [e_p, p_absent] = mb.encode_prompts(edge, false, 0, 0);
  CHECK(e_p.value().dim(0) == 4);  // 8x8 stride-4 map -> 2x2 coarse grid
  CHECK(e_p.value().dim(1) == 16);
  const nn::Tensor& np = ps.find("maskbranch.no_point")->value();
  for (long i = 0; i < np.size(); ++i) CHECK(p_absent.value()[i] == np[i]);

  auto [e2, p_a] = mb.encode_prompts(edge, true, 0.5, 0.5);
  auto [e3, p_b] = mb.encode_prompts(edge, true, 0.25, 0.5);
  double diff = 0;
  for (long i = 0; i < p_a.value().size(); ++i)
    diff = std::max(diff, std::abs(p_a.value()[i] - p_b.value()[i]));
  CHECK(diff > 1e-8);
  CHECK(p_a.value().dim(0) == 1);
  CHECK(p_a.value().dim(1) == 16);
}

TEST_CASE("mask decoder produces full-resolution logits deterministically") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(6);
  MaskBranch mb(ps, cfg, rng);

  RngStream drng(11);
  nn::Var gated = nn::constant(hdtest::random_tensor({4, 16}, drng, 0.5));
  nn::Var e_p = nn::constant(hdtest::random_tensor({4, 16}, drng, 0.5));
  nn::Var p_p = nn::constant(hdtest::random_tensor({1, 16}, drng, 0.5));
  nn::Var f1 = nn::constant(hdtest::random_tensor({8, 8, 8}, drng, 0.5));
  nn::Var f2 = nn::constant(hdtest::random_tensor({12, 4, 4}, drng, 0.5));

  nn::Var a = mb.decode_mask(gated, 2, 2, e_p, p_p, f1, f2, 32, 32);
  nn::Var b = mb.decode_mask(gated, 2, 2, e_p, p_p, f1, f2, 32, 32);
  CHECK(a.value().dim(0) == 1);
  CHECK(a.value().dim(1) == 32);
  CHECK(a.value().dim(2) == 32);
  CHECK(a.value().all_finite());
  for (long i = 0; i < a.value().size(); ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("mask memory encoder fuses the downsampled mask") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(7);
  MaskBranch mb(ps, cfg, rng);

  RngStream drng(12);
  nn::Var tokens = nn::constant(hdtest::random_tensor({4, 16}, drng, 0.5));
  nn::Tensor empty = nn::Tensor::zeros({32, 32});
  nn::Tensor half = nn::Tensor::zeros({32, 32});
  for (long y = 0; y < 16; ++y)
    for (long x = 0; x < 32; ++x) half.at(y, x) = 1.0;

  nn::Var m0 = mb.encode_memory(tokens, empty, 2, 2);
  nn::Var m1 = mb.encode_memory(tokens, half, 2, 2);
  CHECK(m0.value().dim(0) == 4);
  CHECK(m0.value().dim(1) == 16);
  double diff = 0;
  for (long i = 0; i < m0.value().size(); ++i)
    diff = std::max(diff, std::abs(m0.value()[i] - m1.value()[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("reference features combine offset-corrected point and mask memory") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(8);
  PointBranch pb(ps, cfg, rng);

  PointMemoryBank pbank(7);
  MaskMemoryBank mbank(7);
  CHECK_FALSE(pb.build_reference_features(pbank, mbank).defined());

  RngStream drng(13);
  nn::Tensor mem = hdtest::random_tensor({4, 16}, drng, 0.5);
  for (long k = 0; k < 3; ++k) {
    pbank.push({nn::constant(mem.clone()), {0.0, 0.0}, k});
    mbank.push({nn::constant(hdtest::random_tensor({4, 16}, drng, 0.5)),
                nn::Tensor::zeros({32, 32}), k});
  }
  nn::Var ref = pb.build_reference_features(pbank, mbank);
  CHECK(ref.value().dim(0) == 3 * (4 + 4));  // point tokens + mask tokens per frame
  CHECK(ref.value().dim(1) == 16);

  // identical memories with identical offsets produce identical corrected rows
  for (long j = 0; j < 4 * 16; ++j)
    CHECK(ref.value()[j] == ref.value()[8 * 16 + j]);

  // a different offset changes the corrected rows
  PointMemoryBank pbank2(7);
  pbank2.push({nn::constant(mem.clone()), {0.8, -0.4}, 0});
  MaskMemoryBank mbank2(7);
  nn::Var ref2 = pb.build_reference_features(pbank2, mbank2);
  CHECK(ref2.value().dim(0) == 4);  // no matching mask entry -> point rows only
  double diff = 0;
  for (long j = 0; j < 4 * 16; ++j)
    diff = std::max(diff, std::abs(ref2.value()[j] - ref.value()[j]));
  CHECK(diff > 1e-8);
}

TEST_CASE("point attention and decoder contracts") {
  ModelConfig cfg = tiny_config(32);
  nn::ParamStore ps;
  RngStream rng(9);
  Backbone bb(ps, cfg, rng);
  PointBranch pb(ps, cfg, rng);

  FeaturePyramid fp = bb.encode(random_frame(32, 32, 14), 0);
  nn::Var f_pt = pb.attend_memory(fp, {});
  CHECK(f_pt.value().same_shape(fp.tokens.value()));

  auto d1 = pb.decode(f_pt, fp.grid_h, fp.grid_w, 0, 0.5);
  auto d2 = pb.decode(f_pt, fp.grid_h, fp.grid_w, 0, 0.5);
  CHECK(d1.pred.x >= 0.0);
  CHECK(d1.pred.x <= 1.0);
  CHECK(d1.pred.y >= 0.0);
  CHECK(d1.pred.y <= 1.0);
  CHECK(d1.pred.score >= 0.0);
  CHECK(d1.pred.score <= 1.0);
  CHECK(d1.pred.x == d2.pred.x);
  CHECK(d1.pred.score == d2.pred.score);
  CHECK(d1.pred.has_point == (d1.pred.score >= 0.5));

  // memory encoding distinguishes present from absent points
  PointPrediction with{0.3, 0.7, 0.9, true, 0};
  PointPrediction without{0.0, 0.0, 0.1, false, 0};
  nn::Var ma = pb.encode_memory(f_pt, with);
  nn::Var mb_ = pb.encode_memory(f_pt, without);
  double diff = 0;
  for (long i = 0; i < ma.value().size(); ++i)
    diff = std::max(diff, std::abs(ma.value()[i] - mb_.value()[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("point path gradient matches finite differences") {
  ModelConfig cfg = tiny_config(32);
  cfg.channels_coarse = 8;
  nn::ParamStore ps;
  RngStream rng(10);
  PointBranch pb(ps, cfg, rng);

  RngStream drng(15);
  nn::Tensor tokens = hdtest::random_tensor({4, 8}, drng, 0.5);
  auto f = [&](std::vector<nn::Var>& v) {
    FeaturePyramid fp;
    fp.tokens = v[0];
    fp.grid_h = 2;
    fp.grid_w = 2;
    nn::Var f_pt = pb.attend_memory(fp, {});
    auto d = pb.decode(f_pt, 2, 2, 0, 0.5);
    return nn::add(nn::sum(d.coord), nn::sum(d.score));
  };
  CHECK(hdtest::max_grad_err(f, {tokens}) < 1e-3);
}

TEST_CASE("detector processes a stream and honours the memory protocol") {
  ModelConfig cfg = tiny_config(32);
  OnlineDetector det(cfg, "");

  RngStream rng(30);
  SynthSpec spec = make_synth_spec(10, 32, 32, "static", rng);
  SynthClip sc = synth_clip(spec, RngStream(2));

  nn::NoGradGuard ng(false);
  for (long k = 0; k < 10; ++k) {
    FrameResult r = det.process_frame(sc.clip.frames[k].pixels, k, "c0");
    CHECK(r.mask_logits.value().dim(1) == 32);
    CHECK(r.mask_binary.dim(0) == 32);
    CHECK(r.edge_logits.value().dim(1) == 8);
    CHECK(r.mask_logits.value().all_finite());
    CHECK(std::isfinite(r.offset.dx));
    // binary mask is exactly the 0.5-sigmoid threshold of the logits
    for (long i = 0; i < 32 * 32; ++i)
      CHECK(r.mask_binary[i] == (r.mask_logits.value()[i] > 0.0 ? 1.0 : 0.0));
    CHECK(det.mask_bank().size() == std::min(k + 1, 7L));
    CHECK(det.point_bank().size() == std::min(k + 1, 7L));
    // eval-style processing records no graph
    CHECK_FALSE(r.mask_logits.requires_grad());
  }
  det.reset();
  CHECK(det.mask_bank().size() == 0);
  CHECK(det.point_bank().size() == 0);
}

TEST_CASE("detector streams are independent across resets") {
  ModelConfig cfg = tiny_config(32);
  RngStream rng(31);
  SynthSpec spec = make_synth_spec(6, 32, 32, "drift", rng);
  SynthClip sc = synth_clip(spec, RngStream(4));

  nn::NoGradGuard ng(false);
  OnlineDetector det(cfg, "");
  // stream a first clip, reset, then stream the target clip
  for (long k = 0; k < 3; ++k) det.process_frame(sc.clip.frames[5 - k - 1].pixels, k, "warm");
  det.reset();
  std::vector<nn::Tensor> got;
  for (long k = 0; k < 4; ++k)
    got.push_back(det.process_frame(sc.clip.frames[k].pixels, k, "c0").mask_logits.value());

  OnlineDetector fresh(cfg, "");
  for (long k = 0; k < 4; ++k) {
    nn::Tensor want = fresh.process_frame(sc.clip.frames[k].pixels, k, "c0").mask_logits.value();
    for (long i = 0; i < want.size(); ++i) CHECK(want[i] == got[k][i]);
  }
}

TEST_CASE("branch gradient scoping isolates the alternating phases") {
  ModelConfig cfg = tiny_config(32);
  OnlineDetector det(cfg, "");
  nn::Tensor img = random_frame(32, 32, 40);
  auto grad_mag = [&](const char* name) {
    nn::Var* v = det.params().find(name);
    REQUIRE(v != nullptr);
    return v->has_grad() ? v->grad().abs_max() : 0.0;
  };

  // mask phase: gradients reach backbone + mask branch, never the point branch
  FrameOptions mask_phase;
  mask_phase.mask_grad = true;
  FrameResult r = det.process_frame(img, 0, "c0", mask_phase);
  CHECK(r.mask_logits.requires_grad());
  CHECK_FALSE(r.point_score.requires_grad());
  nn::backward(nn::sum(r.mask_logits));
  CHECK(grad_mag("backbone.stem1.weight") > 0.0);
  CHECK(grad_mag("maskbranch.mask_token") > 0.0);
  CHECK(grad_mag("pointbranch.out_token") == 0.0);
  det.params().zero_grads();
  det.reset();

  // point phase: gradients reach backbone + point branch, never the mask branch
  FrameOptions point_phase;
  point_phase.point_grad = true;
  r = det.process_frame(img, 0, "c0", point_phase);
  CHECK(r.point_score.requires_grad());
  CHECK_FALSE(r.mask_logits.requires_grad());
  nn::backward(nn::add(nn::sum(r.point_coord), nn::sum(r.point_score)));
  CHECK(grad_mag("backbone.stem1.weight") > 0.0);
  CHECK(grad_mag("pointbranch.out_token") > 0.0);
  CHECK(grad_mag("maskbranch.mask_token") == 0.0);
}

TEST_CASE("teacher-forced masks feed the offset computation") {
  ModelConfig cfg = tiny_config(32);
  cfg.offset_normalization = "background_count";
  OnlineDetector det(cfg, "");
  nn::Tensor img = random_frame(32, 32, 41);

  det.process_frame(img, 0, "c0");  // prime prev-frame cache
  nn::Tensor shifted = random_frame(32, 32, 42);

  FlowField uniform;
  uniform.vectors = nn::Tensor({2, 32, 32});
  for (long i = 0; i < 32 * 32; ++i) {
    uniform.vectors[i] = 2.0;
    uniform.vectors[32 * 32 + i] = -1.0;
  }
  FrameOptions opts;
  opts.flow = &uniform;
  nn::Tensor gt = nn::Tensor::zeros({32, 32});
  opts.teacher_mask = &gt;
  FrameResult r = det.process_frame(shifted, 1, "c0", opts);
  CHECK(r.offset.dx == doctest::Approx(2.0));
  CHECK(r.offset.dy == doctest::Approx(-1.0));
}

}  // TEST_SUITE
