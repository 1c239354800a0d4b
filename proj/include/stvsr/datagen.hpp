#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/rng.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Rigidly translating textured shape. Center positions are continuous so the
// scene can be rendered at fractional times; with integer velocities every
// rendered frame is an exact pixel shift of the previous one.
struct Shape {
  enum class Kind { Rectangle, Disk };
  Kind kind = Kind::Rectangle;
  double cx = 0, cy = 0;        // center at time 0, pixels
  double half_w = 0, half_h = 0;  // rect half-extents; disks use half_w as radius
  double vx = 0, vy = 0;        // pixels per frame
  double intensity[3] = {0.5, 0.5, 0.5};
  double texture_amp = 0.0;
  int texture_id = 0;

  bool covers(double x, double y, double time) const {
    double dx = x - (cx + vx * time);
    double dy = y - (cy + vy * time);
    if (kind == Kind::Rectangle)
      return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
    return dx * dx + dy * dy <= half_w * half_w;
  }

  // Same test with the boundary eroded by `margin` pixels.
  bool covers_interior(double x, double y, double time, double margin) const {
    double dx = x - (cx + vx * time);
    double dy = y - (cy + vy * time);
    if (kind == Kind::Rectangle)
      return std::abs(dx) <= half_w - margin && std::abs(dy) <= half_h - margin;
    double r = half_w - margin;
    return r > 0 && dx * dx + dy * dy <= r * r;
  }
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_shapes = 3;
  int t = 17, h = 64, w = 64, c = 3;
  double bg_intensity = 0.1;
  double texture_amp = 0.35;
  int max_speed = 2;        // |vx|,|vy| <= max_speed, integer components
  bool subpixel = false;    // allow fractional velocities (for warp-tolerance tests)
  // When set, these shapes are used verbatim and no random drawing happens.
  std::vector<Shape> shapes;
};

template <class T>
struct ClipWithTruth {
  Video<T> video;
  std::vector<FlowField<T>> true_flow_fwd;  // entry n: frame n -> n+1, on n's grid
  std::vector<FlowField<T>> true_flow_bwd;  // entry n: frame n+1 -> n, on (n+1)'s grid
  std::vector<Shape> shapes;                // realized scene, painter's order
  double bg_intensity = 0.0;
};

namespace detail {

// Deterministic per-lattice-point texture value in [0,1); anchored to the
// shape so it translates rigidly with it.
inline double texture01(int u, int v, int texture_id, int ch) {
  std::uint64_t x = static_cast<std::uint64_t>(static_cast<std::int64_t>(u)) * 0x9E3779B97F4A7C15ULL;
  x ^= static_cast<std::uint64_t>(static_cast<std::int64_t>(v)) * 0xC2B2AE3D27D4EB4FULL;
  x ^= static_cast<std::uint64_t>(texture_id) * 0x165667B19E3779F9ULL +
       static_cast<std::uint64_t>(ch) * 0x27D4EB2F165667C5ULL;
  x = splitmix64(x);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Texture sampled in shape-local coordinates, bilinear between lattice points.
inline double shape_value(const Shape& s, double x, double y, double time, int ch) {
  double base = s.intensity[ch];
  if (s.texture_amp <= 0.0) return std::clamp(base, 0.0, 1.0);
  double u = x - (s.cx + s.vx * time);
  double v = y - (s.cy + s.vy * time);
  double uf = std::floor(u), vf = std::floor(v);
  double fu = u - uf, fv = v - vf;
  int u0 = static_cast<int>(uf), v0 = static_cast<int>(vf);
  double t00 = texture01(u0, v0, s.texture_id, ch);
  double t01 = texture01(u0 + 1, v0, s.texture_id, ch);
  double t10 = texture01(u0, v0 + 1, s.texture_id, ch);
  double t11 = texture01(u0 + 1, v0 + 1, s.texture_id, ch);
  double tex = (t00 * (1 - fu) + t01 * fu) * (1 - fv) + (t10 * (1 - fu) + t11 * fu) * fv;
  return std::clamp(base + s.texture_amp * (tex - 0.5), 0.0, 1.0);
}

}  // namespace detail

inline void validate_scene(const SceneSpec& spec, const std::vector<Shape>& shapes) {
  if (spec.t < 1 || spec.h < 1 || spec.w < 1 || (spec.c != 1 && spec.c != 3))
    throw DomainError("scene: bad dimensions");
  double speed_cap = spec.w / 8.0;
  for (const auto& s : shapes) {
    if (std::hypot(s.vx, s.vy) > speed_cap)
      throw DomainError("scene: shape speed exceeds W/8 per frame");
    double hw = s.half_w, hh = (s.kind == Shape::Kind::Disk) ? s.half_w : s.half_h;
    if (s.cx - hw < 0 || s.cx + hw > spec.w - 1 || s.cy - hh < 0 ||
        s.cy + hh > spec.h - 1)
      throw DomainError("scene: shape does not fit inside the frame at t=0");
  }
}

// Draw a random scene: sizes and positions chosen so each shape stays fully
// inside the frame for the whole clip (velocity is reduced when necessary).
inline std::vector<Shape> draw_shapes(const SceneSpec& spec) {
  RngStream rng = derive_stream(spec.seed, "datagen.shapes");
  std::vector<Shape> shapes;
  for (int i = 0; i < spec.n_shapes; ++i) {
    Shape s;
    s.kind = (rng.below(2) == 0) ? Shape::Kind::Rectangle : Shape::Kind::Disk;
    double min_sz = std::max(2.0, spec.h / 10.0), max_sz = spec.h / 4.0;
    s.half_w = std::floor(rng.uniform(min_sz, max_sz));
    s.half_h = (s.kind == Shape::Kind::Rectangle)
                   ? std::floor(rng.uniform(min_sz, max_sz))
                   : s.half_w;
    auto draw_vel = [&]() {
      double v = static_cast<double>(static_cast<std::int64_t>(rng.below(2 * spec.max_speed + 1))) -
                 spec.max_speed;
      if (spec.subpixel) v += rng.uniform(-0.5, 0.5);
      return v;
    };
    s.vx = draw_vel();
    s.vy = draw_vel();
    // Small crops cap the speed below max_speed; shrink the drawn velocity
    // the same way the placement loop below does.
    while (std::hypot(s.vx, s.vy) > spec.w / 8.0) {
      if (std::max(std::abs(s.vx), std::abs(s.vy)) < 1.0) {
        s.vx = s.vy = 0.0;  // sub-pixel leftovers on a tiny frame: stop moving
        break;
      }
      if (std::abs(s.vx) >= std::abs(s.vy))
        s.vx -= (s.vx > 0 ? 1.0 : -1.0);
      else
        s.vy -= (s.vy > 0 ? 1.0 : -1.0);
    }
    for (int ch = 0; ch < 3; ++ch) s.intensity[ch] = rng.uniform(0.2, 0.9);
    s.texture_amp = spec.texture_amp;
    s.texture_id = static_cast<int>(i + 1);

    double hh = (s.kind == Shape::Kind::Disk) ? s.half_w : s.half_h;
    auto place = [&](double half, double vel, int extent) {
      double lo = half + std::max(0.0, -vel * (spec.t - 1));
      double hi = (extent - 1) - half - std::max(0.0, vel * (spec.t - 1));
      return std::pair<double, double>(lo, hi);
    };
    // Shrink velocity until a feasible start position exists.
    for (;;) {
      auto [xlo, xhi] = place(s.half_w, s.vx, spec.w);
      auto [ylo, yhi] = place(hh, s.vy, spec.h);
      if (xlo <= xhi && ylo <= yhi) {
        s.cx = std::floor(rng.uniform(xlo, xhi + 1e-9));
        s.cy = std::floor(rng.uniform(ylo, yhi + 1e-9));
        break;
      }
      if (std::abs(s.vx) >= std::abs(s.vy))
        s.vx -= (s.vx > 0 ? 1.0 : -1.0);
      else
        s.vy -= (s.vy > 0 ? 1.0 : -1.0);
    }
    shapes.push_back(s);
  }
  return shapes;
}

// Render one frame at a (possibly fractional) time index.
template <class T>
void render_frame(const std::vector<Shape>& shapes, double bg, double time,
                  Video<T>& out, int frame) {
  int nch = out.c;
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const Shape* top = nullptr;
      for (const auto& s : shapes)  // painter's order: last drawn wins
        if (s.covers(x, y, time)) top = &s;
      for (int ch = 0; ch < nch; ++ch) {
        double v = top ? detail::shape_value(*top, x, y, time, ch) : bg;
        out.at(frame, y, x, ch) = static_cast<T>(v);
      }
    }
  }
}

template <class T>
Video<T> render_at_time(const std::vector<Shape>& shapes, double bg, double time,
                        int h, int w, int c) {
  Video<T> out(1, h, w, c);
  render_frame(shapes, bg, time, out, 0);
  return out;
}

// Exact flow of the scene between times ta and tb, evaluated on ta's grid at
// the given spatial scale (grid positions are block centers for scale > 1).
template <class T>
FlowField<T> true_flow_between(const std::vector<Shape>& shapes, double ta, double tb,
                               int h, int w, int scale = 1) {
  FlowField<T> fl(h / scale, w / scale, 0, 0);
  for (int y = 0; y < fl.h; ++y) {
    for (int x = 0; x < fl.w; ++x) {
      double px = (x + 0.5) * scale - 0.5;
      double py = (y + 0.5) * scale - 0.5;
      const Shape* top = nullptr;
      for (const auto& s : shapes)
        if (s.covers(px, py, ta)) top = &s;
      if (top) {
        fl.dx(y, x) = static_cast<T>(top->vx * (tb - ta) / scale);
        fl.dy(y, x) = static_cast<T>(top->vy * (tb - ta) / scale);
      }
    }
  }
  return fl;
}

template <class T>
ClipWithTruth<T> generate_clip(const SceneSpec& spec) {
  std::vector<Shape> shapes = spec.shapes.empty() && spec.n_shapes > 0
                                  ? draw_shapes(spec)
                                  : spec.shapes;
  validate_scene(spec, shapes);

  ClipWithTruth<T> clip;
  clip.shapes = shapes;
  clip.bg_intensity = spec.bg_intensity;
  clip.video = Video<T>(spec.t, spec.h, spec.w, spec.c);
  for (int f = 0; f < spec.t; ++f)
    render_frame(shapes, spec.bg_intensity, static_cast<double>(f), clip.video, f);
  for (int f = 0; f + 1 < spec.t; ++f) {
    FlowField<T> fwd = true_flow_between<T>(shapes, f, f + 1, spec.h, spec.w);
    fwd.src_frame = f;
    fwd.dst_frame = f + 1;
    FlowField<T> bwd = true_flow_between<T>(shapes, f + 1, f, spec.h, spec.w);
    bwd.src_frame = f + 1;
    bwd.dst_frame = f;
    clip.true_flow_fwd.push_back(std::move(fwd));
    clip.true_flow_bwd.push_back(std::move(bwd));
  }
  return clip;
}

}  // namespace stvsr
