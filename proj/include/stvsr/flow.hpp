#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Flow convention throughout: estimate_flow(a, b) lives on a's grid and
// satisfies a(x) ~= b(x + flow(x)), so backward_warp(b, flow) reconstructs a.
template <class T>
struct FlowEstimatorConfig {
  enum class Method { BlockMatch, InjectedTruth } method = Method::BlockMatch;
  int block = 7;          // odd SAD window size
  int search_radius = 4;  // exhaustive radius at the coarsest level
  int levels = 2;         // pyramid depth; clamped so windows fit
  // Looked up by (src_frame, dst_frame) when method == InjectedTruth.
  const std::vector<FlowField<T>>* truth = nullptr;
};

template <class T>
void validate_flow_config(const FlowEstimatorConfig<T>& cfg) {
  if (cfg.block < 1 || cfg.block % 2 == 0)
    throw ConfigError("flow: block size must be odd and >= 1");
  if (cfg.search_radius < 0) throw ConfigError("flow: search radius must be >= 0");
  if (cfg.levels < 1) throw ConfigError("flow: levels must be >= 1");
}

namespace detail {

template <class T>
struct Plane {
  int h = 0, w = 0, c = 0;
  std::vector<T> data;
  T at(int y, int x, int ch) const {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
};

template <class T>
Plane<T> plane_from_frame(const Video<T>& v, int f) {
  Plane<T> p;
  p.h = v.h;
  p.w = v.w;
  p.c = v.c;
  p.data.assign(v.frame_ptr(f), v.frame_ptr(f) + v.frame_elems());
  return p;
}

template <class T>
Plane<T> half_plane(const Plane<T>& in) {
  Plane<T> out;
  out.h = std::max(1, in.h / 2);
  out.w = std::max(1, in.w / 2);
  out.c = in.c;
  out.data.resize(static_cast<std::size_t>(out.h) * out.w * out.c);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int ch = 0; ch < in.c; ++ch) {
        double acc = in.at(2 * y, 2 * x, ch) + in.at(2 * y, 2 * x + 1, ch) +
                     in.at(2 * y + 1, 2 * x, ch) + in.at(2 * y + 1, 2 * x + 1, ch);
        out.data[(static_cast<std::size_t>(y) * out.w + x) * out.c + ch] =
            static_cast<T>(acc * 0.25);
      }
  return out;
}

template <class T>
double sad(const Plane<T>& a, const Plane<T>& b, int y, int x, int dy, int dx,
           int half) {
  double acc = 0.0;
  for (int oy = -half; oy <= half; ++oy)
    for (int ox = -half; ox <= half; ++ox)
      for (int ch = 0; ch < a.c; ++ch)
        acc += std::abs(static_cast<double>(a.at(y + oy, x + ox, ch)) -
                        static_cast<double>(b.at(y + oy + dy, x + ox + dx, ch)));
  return acc;
}

// Exhaustive integer search around a per-pixel base displacement. Ties go to
// the smallest total displacement magnitude, then lexicographic (dy, dx).
template <class T>
void search_level(const Plane<T>& a, const Plane<T>& b, int block, int radius,
                  std::vector<int>& base_dy, std::vector<int>& base_dx) {
  int half = block / 2;
  std::vector<int> out_dy(base_dy.size()), out_dx(base_dx.size());
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * a.w + x;
      double best_cost = std::numeric_limits<double>::infinity();
      long best_mag = 0;
      int best_dy = 0, best_dx = 0;
      for (int ry = -radius; ry <= radius; ++ry)
        for (int rx = -radius; rx <= radius; ++rx) {
          int dy = base_dy[i] + ry, dx = base_dx[i] + rx;
          double cost = sad(a, b, y, x, dy, dx, half);
          long mag = static_cast<long>(dy) * dy + static_cast<long>(dx) * dx;
          bool better = cost < best_cost ||
                        (cost == best_cost &&
                         (mag < best_mag ||
                          (mag == best_mag &&
                           (dy < best_dy || (dy == best_dy && dx < best_dx)))));
          if (better) {
            best_cost = cost;
            best_mag = mag;
            best_dy = dy;
            best_dx = dx;
          }
        }
      out_dy[i] = best_dy;
      out_dx[i] = best_dx;
    }
  base_dy.swap(out_dy);
  base_dx.swap(out_dx);
}

}  // namespace detail

// Coarse-to-fine exhaustive block matching. The configured radius is used at
// the coarsest level; finer levels refine the upsampled field within +-2.
template <class T>
FlowField<T> block_match_flow(const Video<T>& va, int fa, const Video<T>& vb, int fb,
                              const FlowEstimatorConfig<T>& cfg) {
  validate_flow_config(cfg);
  if (va.h != vb.h || va.w != vb.w || va.c != vb.c)
    throw ShapeError("flow: frames must share shape");

  std::vector<detail::Plane<T>> pa{detail::plane_from_frame(va, fa)};
  std::vector<detail::Plane<T>> pb{detail::plane_from_frame(vb, fb)};
  for (int l = 1; l < cfg.levels; ++l) {
    if (pa.back().h / 2 < cfg.block || pa.back().w / 2 < cfg.block) break;
    pa.push_back(detail::half_plane(pa.back()));
    pb.push_back(detail::half_plane(pb.back()));
  }

  int coarse = static_cast<int>(pa.size()) - 1;
  std::vector<int> dy(static_cast<std::size_t>(pa[coarse].h) * pa[coarse].w, 0);
  std::vector<int> dx(dy.size(), 0);
  detail::search_level(pa[coarse], pb[coarse], cfg.block, cfg.search_radius, dy, dx);

  for (int l = coarse - 1; l >= 0; --l) {
    const auto& cl = pa[l + 1];
    std::vector<int> ndy(static_cast<std::size_t>(pa[l].h) * pa[l].w);
    std::vector<int> ndx(ndy.size());
    for (int y = 0; y < pa[l].h; ++y)
      for (int x = 0; x < pa[l].w; ++x) {
        int cy = std::min(y / 2, cl.h - 1), cx = std::min(x / 2, cl.w - 1);
        std::size_t ci = static_cast<std::size_t>(cy) * cl.w + cx;
        ndy[static_cast<std::size_t>(y) * pa[l].w + x] = 2 * dy[ci];
        ndx[static_cast<std::size_t>(y) * pa[l].w + x] = 2 * dx[ci];
      }
    dy.swap(ndy);
    dx.swap(ndx);
    detail::search_level(pa[l], pb[l], cfg.block, 2, dy, dx);
  }

  FlowField<T> out(va.h, va.w, fa, fb);
  for (int y = 0; y < va.h; ++y)
    for (int x = 0; x < va.w; ++x) {
      out.dy(y, x) = static_cast<T>(dy[static_cast<std::size_t>(y) * va.w + x]);
      out.dx(y, x) = static_cast<T>(dx[static_cast<std::size_t>(y) * va.w + x]);
    }
  return out;
}

template <class T>
FlowField<T> estimate_flow(const Video<T>& va, int fa, const Video<T>& vb, int fb,
                           const FlowEstimatorConfig<T>& cfg) {
  if (cfg.method == FlowEstimatorConfig<T>::Method::InjectedTruth) {
    if (cfg.truth == nullptr)
      throw ConfigError("flow: injected_truth needs a truth table");
    for (const auto& fl : *cfg.truth)
      if (fl.src_frame == fa && fl.dst_frame == fb) {
        if (fl.h != va.h || fl.w != va.w)
          throw ShapeError("flow: injected truth resolution mismatch");
        return fl;
      }
    throw ConfigError("flow: no injected truth for requested frame pair");
  }
  return block_match_flow(va, fa, vb, fb, cfg);
}

// Single-frame convenience overload.
template <class T>
FlowField<T> estimate_flow(const Video<T>& a, const Video<T>& b,
                           const FlowEstimatorConfig<T>& cfg) {
  if (a.t != 1 || b.t != 1) throw ShapeError("flow: expected single-frame videos");
  return estimate_flow(a, 0, b, 0, cfg);
}

template <class T>
void bilinear_flow_lookup(const FlowField<T>& fl, double x, double y, double& odx,
                          double& ody) {
  double cx = std::clamp(x, 0.0, static_cast<double>(fl.w - 1));
  double cy = std::clamp(y, 0.0, static_cast<double>(fl.h - 1));
  int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
  int x1 = std::min(x0 + 1, fl.w - 1), y1 = std::min(y0 + 1, fl.h - 1);
  double fx = cx - x0, fy = cy - y0;
  odx = (fl.dx(y0, x0) * (1 - fx) + fl.dx(y0, x1) * fx) * (1 - fy) +
        (fl.dx(y1, x0) * (1 - fx) + fl.dx(y1, x1) * fx) * fy;
  ody = (fl.dy(y0, x0) * (1 - fx) + fl.dy(y0, x1) * fx) * (1 - fy) +
        (fl.dy(y1, x0) * (1 - fx) + fl.dy(y1, x1) * fx) * fy;
}

// out(x) = frame(x + flow(x)), bilinear, sample positions clamped to borders.
// Linear in the frame values for a fixed flow.
template <class T>
Video<T> backward_warp(const Video<T>& src, int f, const FlowField<T>& flow) {
  if (flow.h != src.h || flow.w != src.w)
    throw ShapeError("warp: flow resolution must match the frame");
  Video<T> out(1, src.h, src.w, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double sx = std::clamp(x + static_cast<double>(flow.dx(y, x)), 0.0,
                             static_cast<double>(src.w - 1));
      double sy = std::clamp(y + static_cast<double>(flow.dy(y, x)), 0.0,
                             static_cast<double>(src.h - 1));
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      int x1 = std::min(x0 + 1, src.w - 1), y1 = std::min(y0 + 1, src.h - 1);
      double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < src.c; ++ch) {
        double top = src.at(f, y0, x0, ch) * (1 - fx) + src.at(f, y0, x1, ch) * fx;
        double bot = src.at(f, y1, x0, ch) * (1 - fx) + src.at(f, y1, x1, ch) * fx;
        out.at(0, y, x, ch) = static_cast<T>(top + (bot - top) * fy);
      }
    }
  return out;
}

template <class T>
Video<T> backward_warp(const Video<T>& frame, const FlowField<T>& flow) {
  if (frame.t != 1) throw ShapeError("warp: expected a single-frame video");
  return backward_warp(frame, 0, flow);
}

// Binary forward-backward check on f_fwd's grid:
// M(x) = 1 iff || f_fwd(x) + f_bwd(x + f_fwd(x)) ||_2 <= eps.
template <class T>
ValidityMask<T> consistency_mask(const FlowField<T>& f_fwd, const FlowField<T>& f_bwd,
                                 double eps) {
  if (eps <= 0.0) throw DomainError("consistency_mask: eps must be > 0");
  if (f_fwd.h != f_bwd.h || f_fwd.w != f_bwd.w)
    throw ShapeError("consistency_mask: flow shapes differ");
  ValidityMask<T> m(f_fwd.h, f_fwd.w);
  for (int y = 0; y < f_fwd.h; ++y)
    for (int x = 0; x < f_fwd.w; ++x) {
      double fx = f_fwd.dx(y, x), fy = f_fwd.dy(y, x);
      double bx, by;
      bilinear_flow_lookup(f_bwd, x + fx, y + fy, bx, by);
      double rx = fx + bx, ry = fy + by;
      m.at(y, x) = (std::sqrt(rx * rx + ry * ry) <= eps) ? T(1) : T(0);
    }
  return m;
}

// Binary motion-boundary check: M(x) = 0 iff some 4-neighbour's flow differs
// from f(x) by more than eps in either component. Warping is unreliable where
// the flow field is discontinuous (occlusion edges, mixed-motion cells), so
// propagation gates on flow smoothness in addition to round-trip consistency.
template <class T>
ValidityMask<T> flow_edge_mask(const FlowField<T>& f, double eps) {
  if (eps <= 0.0) throw DomainError("flow_edge_mask: eps must be > 0");
  ValidityMask<T> m(f.h, f.w);
  auto differs = [&](int y0, int x0, int y1, int x1) {
    return std::abs(f.dx(y0, x0) - f.dx(y1, x1)) > eps ||
           std::abs(f.dy(y0, x0) - f.dy(y1, x1)) > eps;
  };
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      bool edge = (x > 0 && differs(y, x, y, x - 1)) ||
                  (x + 1 < f.w && differs(y, x, y, x + 1)) ||
                  (y > 0 && differs(y, x, y - 1, x)) ||
                  (y + 1 < f.h && differs(y, x, y + 1, x));
      m.at(y, x) = edge ? T(0) : T(1);
    }
  return m;
}

template <class T>
double mean_endpoint_error(const FlowField<T>& est, const FlowField<T>& truth,
                           const ValidityMask<T>* region = nullptr) {
  if (est.h != truth.h || est.w != truth.w)
    throw ShapeError("epe: flow shapes differ");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < est.h; ++y)
    for (int x = 0; x < est.w; ++x) {
      if (region && region->at(y, x) <= T(0)) continue;
      double ex = est.dx(y, x) - truth.dx(y, x);
      double ey = est.dy(y, x) - truth.dy(y, x);
      acc += std::sqrt(ex * ex + ey * ey);
      ++n;
    }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// Chain consecutive-pair flows into a flow from frame `from` to frame `to`
// (either direction), accumulating displacements along the trajectory.
template <class T>
FlowField<T> compose_flows(const std::vector<FlowField<T>>& steps, int from, int to) {
  if (steps.empty()) throw ShapeError("compose_flows: empty chain");
  int h = steps[0].h, w = steps[0].w;
  FlowField<T> acc(h, w, from, to);
  if (from == to) return acc;
  int dir = (to > from) ? 1 : -1;
  for (int f = from; f != to; f += dir) {
    // Step field for f -> f+dir; fwd chains store pair i as i -> i+1,
    // bwd chains store pair i as i+1 -> i.
    int i = (dir > 0) ? f : f - 1;
    if (i < 0 || i >= static_cast<int>(steps.size()))
      throw ShapeError("compose_flows: chain too short for requested pair");
    const FlowField<T>& step = steps[static_cast<std::size_t>(i)];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sx, sy;
        bilinear_flow_lookup(step, x + static_cast<double>(acc.dx(y, x)),
                             y + static_cast<double>(acc.dy(y, x)), sx, sy);
        acc.dx(y, x) += static_cast<T>(sx);
        acc.dy(y, x) += static_cast<T>(sy);
      }
  }
  return acc;
}

}  // namespace stvsr
