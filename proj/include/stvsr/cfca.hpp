#pragma once

#include <string>
#include <vector>

#include "stvsr/flow.hpp"
#include "stvsr/graph.hpp"
#include "stvsr/nn.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

template <class T>
struct PropagatedVideos {
  Video<T> i_l;  // input keyframes
  Video<T> i_f;  // forward-fused:  i_f[0] == i_l[0]
  Video<T> i_b;  // backward-fused: i_b[K-1] == i_l[K-1]
  std::vector<ValidityMask<T>> masks_b;  // gate at backward step n, grid n
  std::vector<ValidityMask<T>> masks_f;  // gate at forward step n, grid n (n>=1)
};

// Bidirectional propagation over keyframes. Backward:
//   I_b[K-1] = I_l[K-1];  I_b[n] = W(I_b[n+1], F_fwd[n]) (.) M_n
//                                 + I_l[n] (.) (1 - M_n)
// where M_n checks F_fwd[n] against F_bwd[n]. Forward mirrors it. The blend
// is convex, so propagated pixels stay within the range of their sources.
template <class T>
PropagatedVideos<T> propagate(const Video<T>& i_l,
                              const std::vector<FlowField<T>>& flows_fwd,
                              const std::vector<FlowField<T>>& flows_bwd,
                              double eps) {
  int k = i_l.t;
  if (static_cast<int>(flows_fwd.size()) != k - 1 ||
      static_cast<int>(flows_bwd.size()) != k - 1)
    throw ShapeError("propagate: need K-1 flows per direction");

  PropagatedVideos<T> out;
  out.i_l = i_l;
  out.i_f = i_l;
  out.i_b = i_l;
  out.masks_b.resize(static_cast<std::size_t>(std::max(0, k - 1)));
  out.masks_f.resize(static_cast<std::size_t>(std::max(0, k - 1)));

  std::size_t fe = i_l.frame_elems();
  for (int n = k - 2; n >= 0; --n) {
    ValidityMask<T> m = consistency_mask(flows_fwd[n], flows_bwd[n], eps);
    Video<T> warped = backward_warp(out.i_b, n + 1, flows_fwd[n]);
    T* dst = out.i_b.frame_ptr(n);
    const T* lp = i_l.frame_ptr(n);
    for (std::size_t i = 0; i < fe; ++i) {
      T mv = m.data[i / static_cast<std::size_t>(i_l.c)];
      dst[i] = static_cast<T>(mv * warped.data[i] + (T(1) - mv) * lp[i]);
    }
    out.masks_b[static_cast<std::size_t>(n)] = std::move(m);
  }
  for (int n = 1; n <= k - 1; ++n) {
    ValidityMask<T> m = consistency_mask(flows_bwd[n - 1], flows_fwd[n - 1], eps);
    Video<T> warped = backward_warp(out.i_f, n - 1, flows_bwd[n - 1]);
    T* dst = out.i_f.frame_ptr(n);
    const T* lp = i_l.frame_ptr(n);
    for (std::size_t i = 0; i < fe; ++i) {
      T mv = m.data[i / static_cast<std::size_t>(i_l.c)];
      dst[i] = static_cast<T>(mv * warped.data[i] + (T(1) - mv) * lp[i]);
    }
    out.masks_f[static_cast<std::size_t>(n - 1)] = std::move(m);
  }
  return out;
}

template <class T>
struct CandidateTriplet {
  Video<T> cand_l, cand_f, cand_b;  // one frame each
};

namespace detail {

template <class T>
FlowField<T> scaled_flow(const FlowField<T>& f, double s) {
  FlowField<T> out = f;
  for (T& v : out.data) v = static_cast<T>(v * s);
  return out;
}

}  // namespace detail

// Intermediate prediction between keyframes m and m+1 at fraction tau.
// Linear motion: the target pixel came from tau of the way back along the
// backward flow (for the m side) and (1-tau) forward along the forward flow
// (for the m+1 side). S = (1-tau) weights the m side, so tau -> 0 recovers
// keyframe m and a static scene degenerates to the temporal blend
// tau*I[m+1] + (1-tau)*I[m].
template <class T>
CandidateTriplet<T> predict_intermediate(const PropagatedVideos<T>& videos, int m,
                                         double tau, const FlowField<T>& key_fwd,
                                         const FlowField<T>& key_bwd) {
  if (!(tau > 0.0 && tau < 1.0))
    throw DomainError("predict_intermediate: tau must lie in (0,1)");
  if (m < 0 || m + 1 >= videos.i_l.t)
    throw DomainError("predict_intermediate: keyframe index out of range");

  FlowField<T> to_m = detail::scaled_flow(key_bwd, tau);        // k -> m
  FlowField<T> to_m1 = detail::scaled_flow(key_fwd, 1.0 - tau); // k -> m+1
  double s = 1.0 - tau;

  CandidateTriplet<T> out;
  auto blend = [&](const Video<T>& v) {
    Video<T> from_m = backward_warp(v, m, to_m);
    Video<T> from_m1 = backward_warp(v, m + 1, to_m1);
    Video<T> c(1, v.h, v.w, v.c);
    for (std::size_t i = 0; i < c.data.size(); ++i)
      c.data[i] = static_cast<T>(s * from_m.data[i] + (1.0 - s) * from_m1.data[i]);
    return c;
  };
  out.cand_l = blend(videos.i_l);
  out.cand_f = blend(videos.i_f);
  out.cand_b = blend(videos.i_b);
  return out;
}

// Fusion net Psi: three 3x3 convs over the stacked candidates (3C -> 16 -> 16
// -> C), SiLU between, zero-initialized last layer, residual around the
// candidate mean. Fresh weights therefore output exactly the mean.
struct FusionConfig {
  int hidden = 16;
};

template <class T>
void register_fusion(ParamStore<T>& store, std::uint64_t seed,
                     const FusionConfig& cfg, int c = 3) {
  init_he(store.add("fusion.conv1.w", {3, 3, 3 * c, cfg.hidden}), seed,
          "fusion.conv1.w", static_cast<std::size_t>(9) * 3 * c);
  store.add("fusion.conv1.b", {cfg.hidden});
  init_he(store.add("fusion.conv2.w", {3, 3, cfg.hidden, cfg.hidden}), seed,
          "fusion.conv2.w", static_cast<std::size_t>(9) * cfg.hidden);
  store.add("fusion.conv2.b", {cfg.hidden});
  store.add("fusion.conv3.w", {3, 3, cfg.hidden, c});  // zero init
  store.add("fusion.conv3.b", {c});
}

// cand_* are [N,H,W,C] nodes (N intermediate frames fused at once).
template <class T>
int fuse_triplet(Graph<T>& g, Binding<T>& p, int cand_l, int cand_f, int cand_b,
                 bool inference = false) {
  require_same_shape(g.val(cand_l), g.val(cand_f), "fuse_triplet");
  require_same_shape(g.val(cand_l), g.val(cand_b), "fuse_triplet");
  int x = ops::concat(g, std::vector<int>{cand_l, cand_f, cand_b}, 3);
  int h = ops::conv2d(g, x, p("fusion.conv1.w"));
  h = ops::silu(g, ops::bias_add(g, h, p("fusion.conv1.b")));
  h = ops::conv2d(g, h, p("fusion.conv2.w"));
  h = ops::silu(g, ops::bias_add(g, h, p("fusion.conv2.b")));
  h = ops::conv2d(g, h, p("fusion.conv3.w"));
  h = ops::bias_add(g, h, p("fusion.conv3.b"));
  int mean = ops::scale(
      g, ops::add(g, ops::add(g, cand_l, cand_f), cand_b), 1.0 / 3.0);
  int out = ops::add(g, mean, h);
  return inference ? ops::clamp01(g, out) : out;
}

// Interleave keyframes (unchanged) with fused intermediates in temporal
// order, then upsample spatially by phi_s. Output shape matches I_h.
template <class T>
int assemble_intermediate_video(Graph<T>& g, const Video<T>& i_l, int fused,
                                const ScaleFactors& scales) {
  validate_scales(scales);
  int k = i_l.t, phi_t = scales.phi_t;
  int n_int = (k - 1) * (phi_t - 1);
  if (phi_t > 1) {
    const Tensor<T>& fv = g.val(fused);
    if (fv.rank() != 4 || fv.dim(0) != n_int || fv.dim(1) != i_l.h ||
        fv.dim(2) != i_l.w || fv.dim(3) != i_l.c)
      throw ShapeError("assemble: expected " + std::to_string(n_int) +
                       " fused intermediates matching keyframe shape");
  }

  auto key_node = [&](int f) {
    Tensor<T> t({1, i_l.h, i_l.w, i_l.c});
    std::copy(i_l.frame_ptr(f), i_l.frame_ptr(f) + i_l.frame_elems(), t.ptr());
    return g.constant(std::move(t));
  };

  std::vector<int> frames;
  for (int m = 0; m < k; ++m) {
    frames.push_back(key_node(m));
    if (m + 1 < k)
      for (int j = 1; j < phi_t; ++j)
        frames.push_back(ops::slice(g, fused, 0, m * (phi_t - 1) + (j - 1), 1));
  }
  int seq = frames.size() == 1 ? frames[0] : ops::concat(g, frames, 0);
  return ops::resize_bilinear_nhwc(g, seq, i_l.h * scales.phi_s,
                                   i_l.w * scales.phi_s);
}

}  // namespace stvsr
