#include <catch2/catch_amalgamated.hpp>

#include "stvsr/datagen.hpp"
#include "stvsr/degrade.hpp"
#include "stvsr/flow.hpp"

using namespace stvsr;

namespace {

// One textured rectangle translating at integer velocity, fully in-frame.
SceneSpec moving_rect_scene(double vx, double vy, int t = 4, int hw = 32) {
  SceneSpec spec;
  spec.seed = 1;
  spec.t = t;
  spec.h = hw;
  spec.w = hw;
  spec.c = 3;
  spec.bg_intensity = 0.1;
  Shape s;
  s.kind = Shape::Kind::Rectangle;
  // Center the whole trajectory so the rect stays in frame at every time.
  s.cx = std::round(hw / 2.0 - vx * (t - 1) / 2.0);
  s.cy = std::round(hw / 2.0 - vy * (t - 1) / 2.0);
  s.half_w = 9;
  s.half_h = 8;
  s.vx = vx;
  s.vy = vy;
  s.intensity[0] = 0.6;
  s.intensity[1] = 0.5;
  s.intensity[2] = 0.4;
  s.texture_amp = 0.35;
  s.texture_id = 1;
  spec.shapes = {s};
  spec.n_shapes = 1;
  return spec;
}

ValidityMask<float> interior_mask(const std::vector<Shape>& shapes, double time,
                                  int h, int w, double margin) {
  ValidityMask<float> m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& s : shapes)
        if (s.covers_interior(x, y, time, margin)) m.at(y, x) = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("generated clips are deterministic and valid") {
  SceneSpec spec;
  spec.seed = 17;
  spec.t = 5;
  spec.h = 32;
  spec.w = 32;
  auto a = generate_clip<float>(spec);
  auto b = generate_clip<float>(spec);
  CHECK(a.video.data == b.video.data);
  CHECK_NOTHROW(validate_video(a.video));
  REQUIRE(a.true_flow_fwd.size() == 4);
  REQUIRE(a.true_flow_bwd.size() == 4);
  CHECK(a.true_flow_fwd[2].src_frame == 2);
  CHECK(a.true_flow_fwd[2].dst_frame == 3);
  CHECK(a.true_flow_bwd[2].src_frame == 3);
  CHECK(a.true_flow_bwd[2].dst_frame == 2);

  spec.seed = 18;
  auto c = generate_clip<float>(spec);
  CHECK(a.video.data != c.video.data);
}

TEST_CASE("integer-velocity scenes render as exact pixel shifts") {
  auto clip = generate_clip<double>(moving_rect_scene(2, 1));
  const auto& s = clip.shapes[0];
  // Interior of the shape at frame 1 must equal frame 0 shifted by (vx, vy).
  int checked = 0;
  for (int y = 2; y < clip.video.h - 2; ++y)
    for (int x = 2; x < clip.video.w - 2; ++x) {
      if (!s.covers_interior(x, y, 1.0, 1.5)) continue;
      for (int ch = 0; ch < 3; ++ch)
        CHECK(clip.video.at(1, y, x, ch) ==
              Catch::Approx(clip.video.at(0, y - 1, x - 2, ch)).margin(1e-12));
      ++checked;
    }
  CHECK(checked > 50);
}

TEST_CASE("true flow matches shape velocity inside and zero outside") {
  auto spec = moving_rect_scene(2, -1);
  auto clip = generate_clip<double>(spec);
  const auto& fl = clip.true_flow_fwd[0];
  const auto& s = clip.shapes[0];
  for (int y = 0; y < fl.h; ++y)
    for (int x = 0; x < fl.w; ++x) {
      if (s.covers(x, y, 0.0)) {
        CHECK(fl.dx(y, x) == Catch::Approx(2.0));
        CHECK(fl.dy(y, x) == Catch::Approx(-1.0));
      } else {
        CHECK(fl.dx(y, x) == 0.0);
        CHECK(fl.dy(y, x) == 0.0);
      }
    }
  // Backward flow is the negation evaluated on the next frame's grid.
  const auto& bl = clip.true_flow_bwd[0];
  for (int y = 0; y < bl.h; ++y)
    for (int x = 0; x < bl.w; ++x)
      if (s.covers(x, y, 1.0)) {
        CHECK(bl.dx(y, x) == Catch::Approx(-2.0));
        CHECK(bl.dy(y, x) == Catch::Approx(1.0));
      }
}

TEST_CASE("scaled truth flow reports block-center motion in coarse pixels") {
  auto spec = moving_rect_scene(2, 0);
  auto clip = generate_clip<double>(spec);
  FlowField<double> half =
      true_flow_between<double>(clip.shapes, 0, 1, spec.h, spec.w, 2);
  REQUIRE(half.h == spec.h / 2);
  REQUIRE(half.w == spec.w / 2);
  const auto& s = clip.shapes[0];
  for (int y = 0; y < half.h; ++y)
    for (int x = 0; x < half.w; ++x)
      if (s.covers_interior((x + 0.5) * 2 - 0.5, (y + 0.5) * 2 - 0.5, 0.0, 1.0))
        CHECK(half.dx(y, x) == Catch::Approx(1.0));  // 2 px at full res = 1 coarse px
}

TEST_CASE("scene validation rejects out-of-frame and too-fast shapes") {
  SceneSpec spec = moving_rect_scene(1, 0);
  spec.shapes[0].cx = 1.0;  // half_w 9 pokes out of the left edge
  CHECK_THROWS_AS(generate_clip<float>(spec), DomainError);

  SceneSpec fast = moving_rect_scene(1, 0);
  fast.shapes[0].vx = fast.w;  // above the W/8 speed cap
  CHECK_THROWS_AS(generate_clip<float>(fast), DomainError);
}

TEST_CASE("degradation with everything disabled is the identity") {
  auto clip = generate_clip<float>(moving_rect_scene(1, 1));
  DegradationConfig cfg;
  cfg.blur_sigma_lo = cfg.blur_sigma_hi = 0.0;
  cfg.noise_sigma_lo = cfg.noise_sigma_hi = 0.0;
  cfg.quantize_bits = 0;
  cfg.scales.phi_s = 1;
  Video<float> out = spatial_degrade(clip.video, cfg);
  CHECK(out.data == clip.video.data);
}

TEST_CASE("blur preserves constants and quantization lands on the u8 grid") {
  Video<double> flat(2, 8, 8, 3, 0.37);
  DegradationConfig cfg;
  cfg.blur_sigma_lo = cfg.blur_sigma_hi = 1.3;
  cfg.noise_sigma_lo = cfg.noise_sigma_hi = 0.0;
  cfg.quantize_bits = 0;
  cfg.scales.phi_s = 4;
  Video<double> out = spatial_degrade(flat, cfg);
  REQUIRE(out.h == 2);
  REQUIRE(out.w == 2);
  for (double v : out.data) CHECK(v == Catch::Approx(0.37).margin(1e-12));

  auto clip = generate_clip<double>(moving_rect_scene(1, 0));
  DegradationConfig q;
  q.blur_sigma_lo = q.blur_sigma_hi = 0.5;
  q.noise_sigma_lo = q.noise_sigma_hi = 2.0 / 255.0;
  q.quantize_bits = 8;
  q.scales.phi_s = 4;
  Video<double> lq = spatial_degrade(clip.video, q);
  for (double v : lq.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v * 255.0 == Catch::Approx(std::round(v * 255.0)).margin(1e-9));
  }
}

TEST_CASE("degradation is seed-deterministic and seed-sensitive") {
  auto clip = generate_clip<float>(moving_rect_scene(1, 1));
  DegradationConfig cfg;
  cfg.seed = 5;
  Video<float> a = spatial_degrade(clip.video, cfg);
  Video<float> b = spatial_degrade(clip.video, cfg);
  CHECK(a.data == b.data);
  cfg.seed = 6;
  Video<float> c = spatial_degrade(clip.video, cfg);
  CHECK(a.data != c.data);
}

TEST_CASE("temporal_subsample keeps keyframes and checks divisibility") {
  Video<float> v(9, 2, 2, 1);
  for (int f = 0; f < 9; ++f)
    for (std::size_t i = 0; i < v.frame_elems(); ++i)
      v.frame_ptr(f)[i] = static_cast<float>(f) / 10.0f;
  Video<float> k = temporal_subsample(v, 4);
  REQUIRE(k.t == 3);
  CHECK(k.at(0, 0, 0, 0) == 0.0f);
  CHECK(k.at(1, 0, 0, 0) == 0.4f);
  CHECK(k.at(2, 0, 0, 0) == 0.8f);

  Video<float> bad(8, 2, 2, 1);
  CHECK_THROWS_AS(temporal_subsample(bad, 4), ShapeError);
  CHECK_THROWS_AS(temporal_subsample(v, 0), DomainError);
}

TEST_CASE("make_pair produces the advertised low-quality geometry") {
  SceneSpec spec = moving_rect_scene(1, 0, 9, 32);
  auto clip = generate_clip<float>(spec);
  DegradationConfig cfg;
  cfg.seed = 3;
  cfg.scales.phi_s = 4;
  cfg.scales.phi_t = 4;
  TrainingPair<float> p = make_pair(clip.video, cfg);
  CHECK(p.hq.t == 9);
  CHECK(p.lq.t == 3);  // (9-1)/4 + 1
  CHECK(p.lq.h == 8);
  CHECK(p.lq.w == 8);
  CHECK_NOTHROW(validate_video(p.lq));
}

TEST_CASE("block matching recovers integer translations in the interior") {
  auto clip = generate_clip<double>(moving_rect_scene(2, 1, 3));
  FlowEstimatorConfig<double> cfg;
  FlowField<double> est = block_match_flow(clip.video, 0, clip.video, 1, cfg);
  ValidityMask<double> region(clip.video.h, clip.video.w);
  int n = 0;
  for (int y = 0; y < region.h; ++y)
    for (int x = 0; x < region.w; ++x)
      if (clip.shapes[0].covers_interior(x, y, 0.0, 4.0)) {
        region.at(y, x) = 1.0;
        ++n;
      }
  REQUIRE(n > 30);
  double epe = mean_endpoint_error(est, clip.true_flow_fwd[0], &region);
  CHECK(epe < 0.25);

  // Flat background has no signal; the tie-break prefers zero displacement.
  CHECK(est.dx(0, 0) == 0.0);
  CHECK(est.dy(0, 0) == 0.0);
}

TEST_CASE("estimate_flow dispatches to injected truth by frame pair") {
  auto clip = generate_clip<float>(moving_rect_scene(1, 0, 3));
  FlowEstimatorConfig<float> cfg;
  cfg.method = FlowEstimatorConfig<float>::Method::InjectedTruth;
  cfg.truth = &clip.true_flow_fwd;
  FlowField<float> f = estimate_flow(clip.video, 1, clip.video, 2, cfg);
  CHECK(f.src_frame == 1);
  CHECK(f.dst_frame == 2);
  CHECK(f.data == clip.true_flow_fwd[1].data);

  CHECK_THROWS_AS(estimate_flow(clip.video, 2, clip.video, 1, cfg), ConfigError);
  cfg.truth = nullptr;
  CHECK_THROWS_AS(estimate_flow(clip.video, 0, clip.video, 1, cfg), ConfigError);
}

TEST_CASE("backward_warp applies constant flows exactly on a ramp") {
  Video<double> img(1, 4, 6, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) img.at(0, y, x, 0) = (y * 6 + x) / 100.0;

  FlowField<double> shift(4, 6);
  for (auto& v : shift.data) v = 0.0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) shift.dx(y, x) = 1.0;

  Video<double> w = backward_warp(img, shift);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(w.at(0, y, x, 0) == Catch::Approx(img.at(0, y, x + 1, 0)).margin(1e-12));
  // Border samples clamp to the last column.
  for (int y = 0; y < 4; ++y)
    CHECK(w.at(0, y, 5, 0) == Catch::Approx(img.at(0, y, 5, 0)).margin(1e-12));

  // Half-pixel flow averages neighbors.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) shift.dx(y, x) = 0.5;
  Video<double> h = backward_warp(img, shift);
  CHECK(h.at(0, 0, 0, 0) ==
        Catch::Approx(0.5 * (img.at(0, 0, 0, 0) + img.at(0, 0, 1, 0))).margin(1e-12));

  FlowField<double> wrong(3, 3);
  CHECK_THROWS_AS(backward_warp(img, wrong), ShapeError);
}

TEST_CASE("consistency mask accepts exact inverses and rejects mismatches") {
  FlowField<float> fwd(5, 5), bwd(5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      fwd.dx(y, x) = 1.0f;
      bwd.dx(y, x) = -1.0f;
    }
  ValidityMask<float> m = consistency_mask(fwd, bwd, 1.0);
  for (float v : m.data) CHECK(v == 1.0f);

  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) bwd.dx(y, x) = 1.0f;  // residual 2 px > eps
  ValidityMask<float> z = consistency_mask(fwd, bwd, 1.0);
  for (float v : z.data) CHECK(v == 0.0f);

  CHECK_THROWS_AS(consistency_mask(fwd, bwd, 0.0), DomainError);
}

TEST_CASE("compose_flows chains pair fields in both directions") {
  // Three frames, uniform motion of +1 px/frame in x.
  std::vector<FlowField<double>> fwd, bwd;
  for (int i = 0; i < 2; ++i) {
    FlowField<double> f(4, 8, i, i + 1), b(4, 8, i + 1, i);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 8; ++x) {
        f.dx(y, x) = 1.0;
        b.dx(y, x) = -1.0;
      }
    fwd.push_back(f);
    bwd.push_back(b);
  }
  FlowField<double> two = compose_flows(fwd, 0, 2);
  // Interior accumulates to 2; the border lookup clamps but stays finite.
  CHECK(two.dx(1, 3) == Catch::Approx(2.0).margin(1e-12));
  CHECK(two.dy(1, 3) == Catch::Approx(0.0).margin(1e-12));

  FlowField<double> back = compose_flows(bwd, 2, 0);
  CHECK(back.dx(1, 5) == Catch::Approx(-2.0).margin(1e-12));

  FlowField<double> none = compose_flows(fwd, 1, 1);
  CHECK(none.dx(0, 0) == 0.0);
  CHECK_THROWS_AS(compose_flows(fwd, 0, 3), ShapeError);
}
