#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/tensor.hpp"

namespace stvsr {

// T x H x W x C clip, channel-last, intensities in [0,1].
template <class T>
struct Video {
  int t = 0, h = 0, w = 0, c = 0;
  std::vector<T> data;

  Video() = default;
  Video(int t_, int h_, int w_, int c_, T fill = T(0))
      : t(t_), h(h_), w(w_), c(c_),
        data(static_cast<std::size_t>(t_) * h_ * w_ * c_, fill) {}

  std::size_t idx(int f, int y, int x, int ch) const {
    return ((static_cast<std::size_t>(f) * h + y) * w + x) * c + ch;
  }
  T& at(int f, int y, int x, int ch) { return data[idx(f, y, x, ch)]; }
  const T& at(int f, int y, int x, int ch) const { return data[idx(f, y, x, ch)]; }

  std::size_t frame_elems() const {
    return static_cast<std::size_t>(h) * w * c;
  }
  T* frame_ptr(int f) { return data.data() + frame_elems() * f; }
  const T* frame_ptr(int f) const { return data.data() + frame_elems() * f; }

  bool same_shape(const Video& o) const {
    return t == o.t && h == o.h && w == o.w && c == o.c;
  }
};

template <class T>
void validate_video(const Video<T>& v, const char* what = "video") {
  if (v.t < 1 || v.h < 1 || v.w < 1 || v.c < 1)
    throw DomainError(std::string(what) + ": dimensions must be >= 1");
  if (v.c != 1 && v.c != 3)
    throw DomainError(std::string(what) + ": channel count must be 1 or 3");
  if (v.data.size() != static_cast<std::size_t>(v.t) * v.h * v.w * v.c)
    throw ShapeError(std::string(what) + ": storage size does not match dims");
  for (const T& x : v.data) {
    double d = static_cast<double>(x);
    if (!std::isfinite(d) || d < 0.0 || d > 1.0)
      throw DomainError(std::string(what) + ": values must be finite and in [0,1]");
  }
}

// Per-frame-pair displacement field, channel order (dx, dy) in pixels.
template <class T>
struct FlowField {
  int h = 0, w = 0;
  int src_frame = 0, dst_frame = 0;
  std::vector<T> data;  // h*w*2

  FlowField() = default;
  FlowField(int h_, int w_, int src = 0, int dst = 0)
      : h(h_), w(w_), src_frame(src), dst_frame(dst),
        data(static_cast<std::size_t>(h_) * w_ * 2, T(0)) {}

  std::size_t idx(int y, int x, int ch) const {
    return (static_cast<std::size_t>(y) * w + x) * 2 + ch;
  }
  T& dx(int y, int x) { return data[idx(y, x, 0)]; }
  T& dy(int y, int x) { return data[idx(y, x, 1)]; }
  const T& dx(int y, int x) const { return data[idx(y, x, 0)]; }
  const T& dy(int y, int x) const { return data[idx(y, x, 1)]; }
};

// H x W reliability weights in [0,1].
template <class T>
struct ValidityMask {
  int h = 0, w = 0;
  std::vector<T> data;

  ValidityMask() = default;
  ValidityMask(int h_, int w_, T fill = T(0))
      : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

  T& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  const T& at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

struct ScaleFactors {
  int phi_s = 4;
  int phi_t = 4;
};

inline void validate_scales(const ScaleFactors& s) {
  if (s.phi_s < 1 || s.phi_t < 1)
    throw DomainError("scale factors must be >= 1");
}

// Bilinear resample with half-pixel-center alignment: the source position of
// output pixel i is (i + 0.5) * in/out - 0.5, clamped to the valid range.
template <class T>
Video<T> resize_bilinear(const Video<T>& v, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) throw DomainError("resize: target dims must be >= 1");
  if (new_h == v.h && new_w == v.w) return v;

  Video<T> out(v.t, new_h, new_w, v.c);
  double sy = static_cast<double>(v.h) / new_h;
  double sx = static_cast<double>(v.w) / new_w;

  std::vector<int> x0(new_w), x1(new_w);
  std::vector<double> fx(new_w);
  for (int x = 0; x < new_w; ++x) {
    double p = (x + 0.5) * sx - 0.5;
    p = std::clamp(p, 0.0, static_cast<double>(v.w - 1));
    x0[x] = static_cast<int>(std::floor(p));
    x1[x] = std::min(x0[x] + 1, v.w - 1);
    fx[x] = p - x0[x];
  }
  for (int f = 0; f < v.t; ++f) {
    for (int y = 0; y < new_h; ++y) {
      double p = (y + 0.5) * sy - 0.5;
      p = std::clamp(p, 0.0, static_cast<double>(v.h - 1));
      int y0 = static_cast<int>(std::floor(p));
      int y1 = std::min(y0 + 1, v.h - 1);
      double fy = p - y0;
      for (int x = 0; x < new_w; ++x) {
        for (int ch = 0; ch < v.c; ++ch) {
          double v00 = v.at(f, y0, x0[x], ch), v01 = v.at(f, y0, x1[x], ch);
          double v10 = v.at(f, y1, x0[x], ch), v11 = v.at(f, y1, x1[x], ch);
          double top = v00 + (v01 - v00) * fx[x];
          double bot = v10 + (v11 - v10) * fx[x];
          out.at(f, y, x, ch) = static_cast<T>(top + (bot - top) * fy);
        }
      }
    }
  }
  return out;
}

template <class T>
Video<T> resize_by_factor(const Video<T>& v, int factor) {
  return resize_bilinear(v, v.h * factor, v.w * factor);
}

}  // namespace stvsr
