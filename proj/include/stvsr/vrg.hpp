#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stvsr/graph.hpp"
#include "stvsr/nn.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Video-representation guidance: a few keyframes are encoded to patch tokens,
// a bank of learned queries cross-attends over all of them to produce a
// compact video embedding, and the condition is an affine projection of
// [video embedding; learned text tokens].
struct VrgConfig {
  int d = 64;
  int heads = 4;
  int n_queries = 4;
  int n_text = 4;
  int n_keyframes = 5;
};

// Uniformly spread n keyframe indices over [0, t-1], endpoints included;
// duplicates from rounding collapse, so short clips may yield fewer indices.
inline std::vector<int> sample_keyframes(int t, int n) {
  if (t < 1) throw DomainError("sample_keyframes: empty clip");
  if (n < 1) throw DomainError("sample_keyframes: need n >= 1");
  std::vector<int> out;
  if (n == 1 || t == 1) {
    out.push_back((t - 1) / 2);
    return out;
  }
  for (int i = 0; i < n; ++i) {
    int idx = static_cast<int>(
        std::lround(static_cast<double>(i) * (t - 1) / (n - 1)));
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

template <class T>
void register_vrg(ParamStore<T>& store, std::uint64_t seed, const VrgConfig& cfg) {
  auto conv = [&](const std::string& name, int ci, int co) {
    init_he(store.add(name + ".w", {3, 3, ci, co}), seed, name + ".w",
            static_cast<std::size_t>(9) * ci);
    store.add(name + ".b", {co});
  };
  conv("vrg.enc.conv1", 3, cfg.d / 2);
  conv("vrg.enc.conv2", cfg.d / 2, cfg.d);
  conv("vrg.enc.conv3", cfg.d, cfg.d);
  init_normal(store.add("vrg.query", {cfg.n_queries, cfg.d}), seed, "vrg.query",
              0.02);
  auto mat = [&](const std::string& name) {
    init_normal(store.add(name, {cfg.d, cfg.d}), seed, name,
                1.0 / std::sqrt(static_cast<double>(cfg.d)));
  };
  mat("vrg.attn.wq");
  mat("vrg.attn.wk");
  mat("vrg.attn.wv");
  mat("vrg.attn.wo");
  init_identity(store.add("vrg.proj.w", {cfg.d, cfg.d}));
  store.add("vrg.proj.b", {cfg.d});
  init_normal(store.add("vrg.text", {cfg.n_text, cfg.d}), seed, "vrg.text", 0.02);
}

// One frame -> P = (h/4)(w/4) patch tokens of width d.
template <class T>
int vrg_encode_frame(Graph<T>& g, Binding<T>& p, int frame, const VrgConfig& cfg) {
  const Tensor<T>& fv = g.val(frame);
  if (fv.rank() != 4 || fv.dim(0) != 1 || fv.dim(3) != 3)
    throw ShapeError("vrg: frame must be [1,h,w,3]");
  int h = ops::conv2d(g, frame, p("vrg.enc.conv1.w"), 2, 2);
  h = ops::silu(g, ops::bias_add(g, h, p("vrg.enc.conv1.b")));
  h = ops::conv2d(g, h, p("vrg.enc.conv2.w"), 2, 2);
  h = ops::silu(g, ops::bias_add(g, h, p("vrg.enc.conv2.b")));
  h = ops::conv2d(g, h, p("vrg.enc.conv3.w"));
  h = ops::bias_add(g, h, p("vrg.enc.conv3.b"));
  const Tensor<T>& hv = g.val(h);
  return ops::reshape(g, h, {hv.dim(1) * hv.dim(2), cfg.d});
}

// Learned queries attend over the concatenated tokens of every keyframe.
template <class T>
int vrg_fuse_video_embedding(Graph<T>& g, Binding<T>& p,
                             const std::vector<int>& frame_tokens,
                             const VrgConfig& cfg) {
  if (frame_tokens.empty()) throw ShapeError("vrg: no keyframe tokens");
  int kv = frame_tokens.size() == 1 ? frame_tokens[0]
                                    : ops::concat(g, frame_tokens, 0);
  return mhca(g, p("vrg.query"), kv, p("vrg.attn.wq"), p("vrg.attn.wk"),
              p("vrg.attn.wv"), p("vrg.attn.wo"), cfg.heads);
}

// c = proj([e_v; e_t]); the projection starts as identity, so the initial
// condition is exactly the stacked embeddings.
template <class T>
int vrg_build_condition(Graph<T>& g, Binding<T>& p, int e_v, const VrgConfig& cfg) {
  (void)cfg;
  int cat = ops::concat(g, std::vector<int>{e_v, p("vrg.text")}, 0);
  return ops::bias_add(g, ops::matmul(g, cat, p("vrg.proj.w")), p("vrg.proj.b"));
}

// Full path from a low-res clip to condition tokens [n_queries + n_text, d].
template <class T>
int vrg_condition(Graph<T>& g, Binding<T>& p, const Video<T>& lq,
                  const VrgConfig& cfg) {
  std::vector<int> keys = sample_keyframes(lq.t, cfg.n_keyframes);
  std::vector<int> tokens;
  for (int f : keys) {
    Tensor<T> frame({1, lq.h, lq.w, lq.c});
    std::copy(lq.frame_ptr(f), lq.frame_ptr(f) + lq.frame_elems(), frame.ptr());
    tokens.push_back(vrg_encode_frame(g, p, g.constant(std::move(frame)), cfg));
  }
  int e_v = vrg_fuse_video_embedding(g, p, tokens, cfg);
  return vrg_build_condition(g, p, e_v, cfg);
}

// Condition without the video branch (ablation): proj([e_t]) only.
template <class T>
int vrg_condition_text_only(Graph<T>& g, Binding<T>& p, const VrgConfig& cfg) {
  (void)cfg;
  return ops::bias_add(g, ops::matmul(g, p("vrg.text"), p("vrg.proj.w")),
                       p("vrg.proj.b"));
}

}  // namespace stvsr
