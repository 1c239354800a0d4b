#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "stvsr/cfca.hpp"
#include "stvsr/datagen.hpp"
#include "stvsr/flow.hpp"
#include "stvsr/latent.hpp"
#include "stvsr/vrg.hpp"

namespace stvsr {

// Ablation arms. The aggregation ladder (interp, flow2, flow_multi) stops at
// the CFCA output; no_vrg and full add the one-step latent refinement, with
// no_vrg conditioning on the text tokens alone.
enum class ArmMode { Interp, Flow2, FlowMulti, NoVrg, Full };

inline ArmMode parse_arm(const std::string& s) {
  if (s == "interp") return ArmMode::Interp;
  if (s == "flow2") return ArmMode::Flow2;
  if (s == "flow_multi") return ArmMode::FlowMulti;
  if (s == "no_vrg") return ArmMode::NoVrg;
  if (s == "full") return ArmMode::Full;
  throw ConfigError("unknown ablation mode: " + s);
}

inline const char* arm_name(ArmMode m) {
  switch (m) {
    case ArmMode::Interp: return "interp";
    case ArmMode::Flow2: return "flow2";
    case ArmMode::FlowMulti: return "flow_multi";
    case ArmMode::NoVrg: return "no_vrg";
    case ArmMode::Full: return "full";
  }
  return "?";
}

inline bool arm_uses_diffusion(ArmMode m) {
  return m == ArmMode::NoVrg || m == ArmMode::Full;
}
inline bool arm_uses_propagation(ArmMode m) {
  return m == ArmMode::FlowMulti || arm_uses_diffusion(m);
}
inline bool arm_uses_flow(ArmMode m) { return m != ArmMode::Interp; }

struct ModelSpec {
  ScaleFactors scales{};
  FusionConfig fusion{};
  VrgConfig vrg{};
  VaeConfig vae{};
  VelocityConfig velocity{};
  DiffusionConfig diffusion{};
  double mask_eps = 1.0;  // forward-backward consistency threshold, px
};

template <class T>
void register_model(ParamStore<T>& store, std::uint64_t seed,
                    const ModelSpec& spec) {
  register_fusion(store, seed, spec.fusion);
  register_vrg(store, seed, spec.vrg);
  register_vae(store, seed, spec.vae);
  VelocityConfig vc = spec.velocity;
  vc.cond_dim = spec.vrg.d;  // K/V projections read the condition tokens
  register_velocity(store, seed, vc, spec.vae.cz);
}

// Frozen-prefix sets for Binding.
inline const std::vector<std::string>& freeze_vae() {
  static const std::vector<std::string> v{"vae."};
  return v;
}
inline const std::vector<std::string>& freeze_all() {
  static const std::vector<std::string> v{""};
  return v;
}
inline const std::vector<std::string>& freeze_all_but_vae() {
  static const std::vector<std::string> v{"fusion.", "vrg.", "vnet."};
  return v;
}
// Aggregation-only arms leave the diffusion side untouched.
inline const std::vector<std::string>& freeze_all_but_fusion() {
  static const std::vector<std::string> v{"vrg.", "vnet.", "vae."};
  return v;
}

inline const std::vector<std::string>& frozen_set_for(ArmMode m) {
  return arm_uses_diffusion(m) ? freeze_vae() : freeze_all_but_fusion();
}

template <class T>
Tensor<T> video_tensor(const Video<T>& v) {
  Tensor<T> t({v.t, v.h, v.w, v.c});
  std::copy(v.data.begin(), v.data.end(), t.ptr());
  return t;
}

template <class T>
Video<T> tensor_video(const Tensor<T>& t) {
  if (t.rank() != 4) throw ShapeError("tensor_video: expected rank-4 [T,H,W,C]");
  Video<T> v(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  std::copy(t.data.begin(), t.data.end(), v.data.begin());
  return v;
}

template <class T>
struct PairFlows {
  std::vector<FlowField<T>> fwd, bwd;  // entry n: n->n+1 on n, n+1->n on n+1
};

template <class T>
PairFlows<T> consecutive_flows(const Video<T>& v,
                               const FlowEstimatorConfig<T>& cfg) {
  PairFlows<T> out;
  for (int n = 0; n + 1 < v.t; ++n) {
    out.fwd.push_back(estimate_flow(v, n, v, n + 1, cfg));
    out.bwd.push_back(estimate_flow(v, n + 1, v, n, cfg));
  }
  return out;
}

// Analytic keyframe-pair flows on the low-res grid, in low-res pixel units.
// Frame ids are keyframe indices so the fields double as an injectable truth
// table for estimate_flow.
template <class T>
PairFlows<T> keyframe_truth_flows(const std::vector<Shape>& shapes, int k,
                                  const ScaleFactors& sc, int hq_h, int hq_w) {
  PairFlows<T> out;
  for (int n = 0; n + 1 < k; ++n) {
    double ta = static_cast<double>(n) * sc.phi_t;
    double tb = static_cast<double>(n + 1) * sc.phi_t;
    FlowField<T> f = true_flow_between<T>(shapes, ta, tb, hq_h, hq_w, sc.phi_s);
    f.src_frame = n;
    f.dst_frame = n + 1;
    FlowField<T> b = true_flow_between<T>(shapes, tb, ta, hq_h, hq_w, sc.phi_s);
    b.src_frame = n + 1;
    b.dst_frame = n;
    out.fwd.push_back(std::move(f));
    out.bwd.push_back(std::move(b));
  }
  return out;
}

// Plain-precision CFCA stage: propagation plus the per-slot candidate
// triplets, batched over intermediate slots as [n_int,h,w,c] videos. Nothing
// upstream of the fusion inputs needs gradient, so this runs outside any
// graph. Aggregation-only arms bypass propagation structurally (i_f = i_b =
// i_l); interp additionally zeroes the prediction flows, reducing each
// candidate to the linear cross-fade of its two keyframes.
template <class T>
struct CfcaBatch {
  Video<T> cand_l, cand_f, cand_b;
  int n_int = 0;
};

template <class T>
CfcaBatch<T> prepare_cfca(const Video<T>& lq, const PairFlows<T>& flows,
                          const ModelSpec& spec, ArmMode mode) {
  int k = lq.t, phi_t = spec.scales.phi_t;
  if (static_cast<int>(flows.fwd.size()) != k - 1 ||
      static_cast<int>(flows.bwd.size()) != k - 1)
    throw ShapeError("prepare_cfca: expected K-1 flow pairs");

  CfcaBatch<T> out;
  out.n_int = (k - 1) * (phi_t - 1);
  if (out.n_int == 0) return out;

  PropagatedVideos<T> vids;
  if (arm_uses_propagation(mode)) {
    vids = propagate(lq, flows.fwd, flows.bwd, spec.mask_eps);
  } else {
    vids.i_l = lq;
    vids.i_f = lq;
    vids.i_b = lq;
  }

  out.cand_l = Video<T>(out.n_int, lq.h, lq.w, lq.c);
  out.cand_f = Video<T>(out.n_int, lq.h, lq.w, lq.c);
  out.cand_b = Video<T>(out.n_int, lq.h, lq.w, lq.c);
  FlowField<T> zero(lq.h, lq.w);
  int slot = 0;
  for (int m = 0; m + 1 < k; ++m)
    for (int j = 1; j < phi_t; ++j, ++slot) {
      double tau = static_cast<double>(j) / phi_t;
      const FlowField<T>& kf = arm_uses_flow(mode) ? flows.fwd[m] : zero;
      const FlowField<T>& kb = arm_uses_flow(mode) ? flows.bwd[m] : zero;
      CandidateTriplet<T> trip = predict_intermediate(vids, m, tau, kf, kb);
      auto put = [&](Video<T>& dst, const Video<T>& src) {
        std::copy(src.data.begin(), src.data.end(), dst.frame_ptr(slot));
      };
      put(out.cand_l, trip.cand_l);
      put(out.cand_f, trip.cand_f);
      put(out.cand_b, trip.cand_b);
    }
  return out;
}

template <class T>
struct RestoreNodes {
  int i_m = -1;   // assembled intermediate video at target shape
  int cond = -1;  // condition tokens (diffusion arms only)
  int z = -1, z_st = -1;
  int out = -1;  // final restored video
};

// The differentiable tail shared by training and inference: fuse candidates,
// assemble and upsample, then (diffusion arms) condition, encode, refine one
// step, decode.
template <class T>
RestoreNodes<T> build_restore_graph(Graph<T>& g, Binding<T>& p,
                                    const Video<T>& lq, const CfcaBatch<T>& cfca,
                                    const ModelSpec& spec, ArmMode mode,
                                    bool inference) {
  RestoreNodes<T> n;
  int fused = -1;
  if (cfca.n_int > 0) {
    int cl = g.constant(video_tensor(cfca.cand_l));
    int cf = g.constant(video_tensor(cfca.cand_f));
    int cb = g.constant(video_tensor(cfca.cand_b));
    fused = fuse_triplet(g, p, cl, cf, cb, inference);
  }
  n.i_m = assemble_intermediate_video(g, lq, fused, spec.scales);
  if (!arm_uses_diffusion(mode)) {
    n.out = n.i_m;
    return n;
  }
  n.cond = mode == ArmMode::NoVrg ? vrg_condition_text_only(g, p, spec.vrg)
                                  : vrg_condition(g, p, lq, spec.vrg);
  n.z = vae_encode(g, p, n.i_m, spec.vae);
  int vel = velocity_forward(g, p, n.z, spec.diffusion.t, n.cond,
                             spec.diffusion.schedule, spec.velocity);
  n.z_st = one_step_sample(g, n.z, vel, spec.diffusion.t, spec.diffusion.schedule);
  // Decode the latent step as a pixel-space correction on the aggregated
  // video rather than reconstructing from scratch: the autoencoder's own
  // reconstruction error cancels between the two decodes, so output fidelity
  // is not capped by the roundtrip, and zero velocity is exactly identity.
  // Kept unclamped so the objective stays smooth; inference clamps on
  // materialization.
  int dec_st = vae_decode(g, p, n.z_st, spec.vae);
  int dec_id = vae_decode(g, p, n.z, spec.vae);
  n.out = ops::add(g, n.i_m, ops::sub(g, dec_st, dec_id));
  return n;
}

// Full inference: K keyframes in, (K-1)*phi_t+1 frames out at phi_s times the
// resolution. Deterministic; parameters enter as constants.
template <class T>
Video<T> restore(const ParamStore<T>& store, const Video<T>& lq,
                 const ModelSpec& spec, const FlowEstimatorConfig<T>& flow_cfg,
                 ArmMode mode = ArmMode::Full) {
  validate_video(lq, "restore");
  validate_scales(spec.scales);
  PairFlows<T> flows = consecutive_flows(lq, flow_cfg);
  CfcaBatch<T> cfca = prepare_cfca(lq, flows, spec, mode);
  Graph<T> g;
  Binding<T> p{&g, &store, &freeze_all()};
  RestoreNodes<T> nodes =
      build_restore_graph(g, p, lq, cfca, spec, mode, /*inference=*/true);
  Video<T> out = tensor_video(g.val(nodes.out));
  for (T& v : out.data) v = std::clamp(v, T(0), T(1));
  return out;
}

// Reference baseline: bilinear spatial upsampling plus linear temporal
// interpolation between upsampled keyframes.
template <class T>
Video<T> baseline_restore(const Video<T>& lq, const ScaleFactors& sc) {
  validate_video(lq, "baseline_restore");
  validate_scales(sc);
  Video<T> up = resize_bilinear(lq, lq.h * sc.phi_s, lq.w * sc.phi_s);
  int t_out = (lq.t - 1) * sc.phi_t + 1;
  Video<T> out(t_out, up.h, up.w, up.c);
  std::size_t fe = up.frame_elems();
  for (int f = 0; f < t_out; ++f) {
    int m = f / sc.phi_t, j = f % sc.phi_t;
    T* dst = out.frame_ptr(f);
    const T* a = up.frame_ptr(m);
    if (j == 0) {
      std::copy(a, a + fe, dst);
    } else {
      double tau = static_cast<double>(j) / sc.phi_t;
      const T* b = up.frame_ptr(m + 1);
      for (std::size_t i = 0; i < fe; ++i)
        dst[i] = static_cast<T>((1.0 - tau) * a[i] + tau * b[i]);
    }
  }
  return out;
}

}  // namespace stvsr
