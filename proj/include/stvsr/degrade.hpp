#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/rng.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

struct DegradationConfig {
  std::uint64_t seed = 0;
  double blur_sigma_lo = 0.2, blur_sigma_hi = 2.0;   // drawn once per clip
  double noise_sigma_lo = 0.0, noise_sigma_hi = 10.0 / 255.0;
  enum class Downsample { Area, Bilinear } downsample = Downsample::Area;
  int quantize_bits = 8;  // 0 disables quantization
  ScaleFactors scales;
};

inline void validate_degradation(const DegradationConfig& cfg) {
  validate_scales(cfg.scales);
  if (cfg.blur_sigma_lo < 0 || cfg.blur_sigma_hi < cfg.blur_sigma_lo)
    throw ConfigError("degrade: bad blur sigma range");
  if (cfg.noise_sigma_lo < 0 || cfg.noise_sigma_hi < cfg.noise_sigma_lo)
    throw ConfigError("degrade: bad noise sigma range");
  if (cfg.quantize_bits < 0 || cfg.quantize_bits > 8)
    throw ConfigError("degrade: quantize_bits must be in [0,8]");
}

namespace detail {

// Normalized 1D Gaussian taps, radius ceil(3*sigma). sigma == 0 is identity.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable blur with replicated borders; a constant image stays constant.
template <class T>
void blur_frame(const Video<T>& in, int f, double sigma, Video<T>& out) {
  std::vector<double> k = gaussian_kernel(sigma);
  int radius = (static_cast<int>(k.size()) - 1) / 2;
  int h = in.h, w = in.w, c = in.c;
  std::vector<double> tmp(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int xs = std::clamp(x + i, 0, w - 1);
          acc += k[i + radius] * static_cast<double>(in.at(f, y, xs, ch));
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int ys = std::clamp(y + i, 0, h - 1);
          acc += k[i + radius] * tmp[(static_cast<std::size_t>(ys) * w + x) * c + ch];
        }
        out.at(f, y, x, ch) = static_cast<T>(acc);
      }
}

template <class T>
Video<T> downsample_area(const Video<T>& in, int factor) {
  Video<T> out(in.t, in.h / factor, in.w / factor, in.c);
  double inv = 1.0 / (factor * factor);
  for (int f = 0; f < in.t; ++f)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        for (int ch = 0; ch < in.c; ++ch) {
          double acc = 0.0;
          for (int by = 0; by < factor; ++by)
            for (int bx = 0; bx < factor; ++bx)
              acc += static_cast<double>(in.at(f, y * factor + by, x * factor + bx, ch));
          out.at(f, y, x, ch) = static_cast<T>(acc * inv);
        }
  return out;
}

}  // namespace detail

// Fixed order: blur -> additive noise -> /phi_s downsample -> quantize -> clamp.
// Blur and noise sigmas are drawn once per call from the configured ranges.
template <class T>
Video<T> spatial_degrade(const Video<T>& hq, const DegradationConfig& cfg) {
  validate_degradation(cfg);
  validate_video(hq, "spatial_degrade input");
  int phi = cfg.scales.phi_s;
  if (hq.h % phi != 0 || hq.w % phi != 0)
    throw ShapeError("spatial_degrade: H and W must be divisible by phi_s");

  RngStream draw = derive_stream(cfg.seed, "degrade.sigmas");
  double blur_sigma = cfg.blur_sigma_lo == cfg.blur_sigma_hi
                          ? cfg.blur_sigma_lo
                          : draw.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
  double noise_sigma = cfg.noise_sigma_lo == cfg.noise_sigma_hi
                           ? cfg.noise_sigma_lo
                           : draw.uniform(cfg.noise_sigma_lo, cfg.noise_sigma_hi);

  Video<T> work(hq.t, hq.h, hq.w, hq.c);
  for (int f = 0; f < hq.t; ++f) detail::blur_frame(hq, f, blur_sigma, work);

  if (noise_sigma > 0.0) {
    RngStream noise = derive_stream(cfg.seed, "degrade.noise");
    for (T& v : work.data)
      v = static_cast<T>(static_cast<double>(v) + noise_sigma * noise.normal());
  }

  Video<T> lq = (phi == 1) ? work
              : cfg.downsample == DegradationConfig::Downsample::Area
                  ? detail::downsample_area(work, phi)
                  : resize_bilinear(work, hq.h / phi, hq.w / phi);

  if (cfg.quantize_bits > 0) {
    double levels = static_cast<double>((1 << cfg.quantize_bits) - 1);
    for (T& v : lq.data)
      v = static_cast<T>(std::round(static_cast<double>(v) * levels) / levels);
  }
  for (T& v : lq.data)
    v = static_cast<T>(std::clamp(static_cast<double>(v), 0.0, 1.0));
  return lq;
}

// Keep frames 0, phi_t, 2*phi_t, ..., T-1. Requires (T-1) % phi_t == 0.
template <class T>
Video<T> temporal_subsample(const Video<T>& in, int phi_t) {
  if (phi_t < 1) throw DomainError("temporal_subsample: phi_t must be >= 1");
  if ((in.t - 1) % phi_t != 0)
    throw ShapeError("temporal_subsample: (T-1) must be divisible by phi_t");
  int k = (in.t - 1) / phi_t + 1;
  Video<T> out(k, in.h, in.w, in.c);
  for (int i = 0; i < k; ++i) {
    const T* src = in.frame_ptr(i * phi_t);
    std::copy(src, src + in.frame_elems(), out.frame_ptr(i));
  }
  return out;
}

template <class T>
struct TrainingPair {
  Video<T> lq;  // K x H/phi_s x W/phi_s x C
  Video<T> hq;  // T x H x W x C
};

template <class T>
TrainingPair<T> make_pair(const Video<T>& hq, const DegradationConfig& cfg) {
  TrainingPair<T> p;
  p.hq = hq;
  p.lq = temporal_subsample(spatial_degrade(hq, cfg), cfg.scales.phi_t);
  return p;
}

}  // namespace stvsr
