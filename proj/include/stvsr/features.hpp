#pragma once

#include <memory>
#include <vector>

#include "stvsr/graph.hpp"
#include "stvsr/nn.hpp"
#include "stvsr/rng.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Frozen random multi-scale conv features. Channel-normalized squared feature
// distance serves both as the perceptual training loss and as the LP term in
// the temporal metric; the weights are a pure function of the seed and are
// never trained.
template <class T>
struct FeatureStack {
  int scales = 3;
  int channels = 8;
  std::uint64_t seed = 0;

  std::vector<Tensor<T>> weights;  // per scale: [3,3,3,channels]

  explicit FeatureStack(std::uint64_t seed_ = 0xfea75eedULL, int scales_ = 3,
                        int channels_ = 8)
      : scales(scales_), channels(channels_), seed(seed_) {
    if (scales < 1 || channels < 1) throw ConfigError("feature stack: bad dims");
    for (int s = 0; s < scales; ++s) {
      Tensor<T> w({3, 3, 3, channels});
      init_he(w, seed, "features.scale" + std::to_string(s), 27);
      weights.push_back(std::move(w));
    }
  }

  // Squared distance between unit-normalized features of two [N,H,W,3] nodes,
  // averaged over positions, channels, and scales.
  int distance(Graph<T>& g, int a, int b) const {
    const Tensor<T>& av = g.val(a);
    if (av.rank() != 4 || av.dim(3) != 3)
      throw ShapeError("feature distance: expected [N,H,W,3]");
    int terms = -1;
    int xa = a, xb = b;
    for (int s = 0; s < scales; ++s) {
      if (s > 0) {
        int h = g.val(xa).dim(1), w = g.val(xa).dim(2);
        if (h < 2 || w < 2) break;
        xa = ops::resize_bilinear_nhwc(g, xa, h / 2, w / 2);
        xb = ops::resize_bilinear_nhwc(g, xb, h / 2, w / 2);
      }
      int wnode = g.constant(weights[static_cast<std::size_t>(s)]);
      int fa = ops::normalize_channels(g, ops::conv2d(g, xa, wnode));
      int fb = ops::normalize_channels(g, ops::conv2d(g, xb, wnode));
      int d = ops::mse(g, fa, fb);
      terms = (terms < 0) ? d : ops::add(g, terms, d);
    }
    return ops::scale(g, terms, 1.0 / scales);
  }

  // Plain-number distance between two frames (no gradients).
  double frame_distance(const Video<T>& va, int fa, const Video<T>& vb,
                        int fb) const {
    Graph<T> g;
    Tensor<T> ta({1, va.h, va.w, va.c});
    Tensor<T> tb({1, vb.h, vb.w, vb.c});
    std::copy(va.frame_ptr(fa), va.frame_ptr(fa) + va.frame_elems(), ta.ptr());
    std::copy(vb.frame_ptr(fb), vb.frame_ptr(fb) + vb.frame_elems(), tb.ptr());
    int d = distance(g, g.constant(std::move(ta)), g.constant(std::move(tb)));
    return static_cast<double>(g.val(d)[0]);
  }
};

}  // namespace stvsr
