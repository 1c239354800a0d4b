#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "stvsr/config.hpp"
#include "stvsr/degrade.hpp"
#include "stvsr/losses.hpp"
#include "stvsr/metrics.hpp"
#include "stvsr/pipeline.hpp"

namespace stvsr {

struct TrainConfig {
  double lr = 5e-5;
  double beta1 = 0.9, beta2 = 0.999;
  int batch = 2;
  long iters = 2000;
  std::uint64_t seed = 0;
  double gamma_consis = 0.1;
  int crop_t = 17, crop_h = 64, crop_w = 64;  // rendered clip shape (HQ)

  int corpus_clips = 48;  // distinct training scenes
  long vae_iters = 2000;  // reconstruction pretraining steps
  int vae_frames = 4;     // frames per pretraining batch
  double vae_lr = 1e-3;

  bool truth_flows = true;  // analytic flows on synthetic data
  DegradationConfig degrade;
};

inline void validate_train(const TrainConfig& cfg, const ModelSpec& spec) {
  if (!(cfg.lr > 0) || !(cfg.vae_lr > 0)) throw ConfigError("train: lr must be > 0");
  if (cfg.batch < 1) throw ConfigError("train: batch must be >= 1");
  if (cfg.iters < 0 || cfg.vae_iters < 0) throw ConfigError("train: iters must be >= 0");
  if (cfg.corpus_clips < 1) throw ConfigError("train: corpus must not be empty");
  validate_scales(spec.scales);
  if (cfg.crop_t < 1 || (cfg.crop_t - 1) % spec.scales.phi_t != 0)
    throw ConfigError("train: crop_t must be (K-1)*phi_t + 1");
  if (cfg.crop_h % spec.scales.phi_s != 0 || cfg.crop_w % spec.scales.phi_s != 0)
    throw ConfigError("train: crop dims must be divisible by phi_s");
  if (cfg.crop_h % spec.vae.r != 0 || cfg.crop_w % spec.vae.r != 0)
    throw ConfigError("train: crop dims must be divisible by the VAE stride");
}

// CLI config adapter. Keys may be bare or under [train].
inline TrainConfig train_config_from(const Config& c) {
  auto d = [&](const char* k, double v) {
    return c.has(k) ? c.get_double(k, v) : c.get_double(std::string("train.") + k, v);
  };
  auto i = [&](const char* k, std::int64_t v) {
    return c.has(k) ? c.get_int(k, v) : c.get_int(std::string("train.") + k, v);
  };
  TrainConfig t;
  t.lr = d("lr", t.lr);
  t.beta1 = d("beta1", t.beta1);
  t.beta2 = d("beta2", t.beta2);
  t.batch = static_cast<int>(i("batch", t.batch));
  t.iters = i("iters", t.iters);
  t.seed = static_cast<std::uint64_t>(i("seed", 0));
  t.gamma_consis = d("gamma_consis", t.gamma_consis);
  t.crop_t = static_cast<int>(i("crop_t", t.crop_t));
  t.crop_h = static_cast<int>(i("crop_h", t.crop_h));
  t.crop_w = static_cast<int>(i("crop_w", t.crop_w));
  t.corpus_clips = static_cast<int>(i("corpus_clips", t.corpus_clips));
  t.vae_iters = i("vae_iters", t.vae_iters);
  t.vae_frames = static_cast<int>(i("vae_frames", t.vae_frames));
  t.vae_lr = d("vae_lr", t.vae_lr);
  t.truth_flows = i("truth_flows", t.truth_flows ? 1 : 0) != 0;
  return t;
}

// Degradation keys (bare or under [degrade]); a single blur_sigma/noise_sigma
// pins the range to that value.
inline DegradationConfig degradation_from_config(const Config& c,
                                                 std::uint64_t default_seed) {
  auto d = [&](const char* k, double v) {
    return c.has(k) ? c.get_double(k, v) : c.get_double(std::string("degrade.") + k, v);
  };
  auto i = [&](const char* k, std::int64_t v) {
    return c.has(k) ? c.get_int(k, v) : c.get_int(std::string("degrade.") + k, v);
  };
  DegradationConfig dc;
  dc.seed = static_cast<std::uint64_t>(i("seed", static_cast<std::int64_t>(default_seed)));
  if (c.has("blur_sigma") || c.has("degrade.blur_sigma"))
    dc.blur_sigma_lo = dc.blur_sigma_hi = d("blur_sigma", 0);
  dc.blur_sigma_lo = d("blur_sigma_lo", dc.blur_sigma_lo);
  dc.blur_sigma_hi = d("blur_sigma_hi", dc.blur_sigma_hi);
  if (c.has("noise_sigma") || c.has("degrade.noise_sigma"))
    dc.noise_sigma_lo = dc.noise_sigma_hi = d("noise_sigma", 0);
  dc.noise_sigma_lo = d("noise_sigma_lo", dc.noise_sigma_lo);
  dc.noise_sigma_hi = d("noise_sigma_hi", dc.noise_sigma_hi);
  dc.quantize_bits = static_cast<int>(i("quantize_bits", dc.quantize_bits));
  dc.scales.phi_s = static_cast<int>(i("phi_s", dc.scales.phi_s));
  dc.scales.phi_t = static_cast<int>(i("phi_t", dc.scales.phi_t));
  validate_degradation(dc);
  return dc;
}

inline std::vector<SceneSpec> make_corpus(std::uint64_t seed, const char* label,
                                          int n, int t, int h, int w) {
  RngStream s = derive_stream(seed, label);
  std::vector<SceneSpec> out(static_cast<std::size_t>(n));
  for (auto& sp : out) {
    sp.seed = s.next_u64();
    sp.t = t;
    sp.h = h;
    sp.w = w;
  }
  return out;
}

namespace detail {

// Stable numeric formatting for logs; streams round differently by locale.
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T>
bool store_finite(const ParamStore<T>& s) {
  for (const auto& name : s.order)
    for (std::size_t i = 0; i < s.get(name).numel(); ++i)
      if (!std::isfinite(static_cast<double>(s.get(name)[i]))) return false;
  return true;
}

}  // namespace detail

template <class T>
std::map<std::string, std::string> train_meta(const TrainConfig& cfg,
                                              const ModelSpec& spec,
                                              ArmMode mode) {
  return {{"seed", std::to_string(cfg.seed)},
          {"iters", std::to_string(cfg.iters)},
          {"lr", detail::fmt_g(cfg.lr)},
          {"gamma_consis", detail::fmt_g(cfg.gamma_consis)},
          {"arm", arm_name(mode)},
          {"phi_s", std::to_string(spec.scales.phi_s)},
          {"phi_t", std::to_string(spec.scales.phi_t)},
          {"t", std::to_string(spec.diffusion.t)},
          {"t_max", std::to_string(spec.diffusion.schedule.t_max)},
          {"n_keyframes", std::to_string(spec.vrg.n_keyframes)}};
}

// Frame-reconstruction pretraining of the VAE alone. Everything else stays
// frozen; the trained VAE is then frozen for the main loop.
template <class T>
double pretrain_vae(ParamStore<T>& store, const ModelSpec& spec,
                    const std::vector<SceneSpec>& corpus, const TrainConfig& cfg,
                    std::ostream* log = nullptr) {
  AdamW<T> opt;
  opt.lr = cfg.vae_lr;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  RngStream pick = derive_stream(cfg.seed, "vae.pretrain");
  double last = 0.0;
  for (long it = 0; it < cfg.vae_iters; ++it) {
    const SceneSpec& sc = corpus[pick.below(corpus.size())];
    ClipWithTruth<T> clip = generate_clip<T>(sc);
    Tensor<T> x({cfg.vae_frames, clip.video.h, clip.video.w, clip.video.c});
    for (int f = 0; f < cfg.vae_frames; ++f) {
      int fi = static_cast<int>(pick.below(static_cast<std::uint64_t>(clip.video.t)));
      std::copy(clip.video.frame_ptr(fi),
                clip.video.frame_ptr(fi) + clip.video.frame_elems(),
                x.ptr() + static_cast<std::size_t>(f) * clip.video.frame_elems());
    }
    Graph<T> g;
    Binding<T> p{&g, &store, &freeze_all_but_vae()};
    int xn = g.constant(std::move(x));
    int y = vae_decode(g, p, vae_encode(g, p, xn, spec.vae), spec.vae);
    int loss = ops::mse(g, y, xn);
    last = static_cast<double>(g.val(loss)[0]);
    if (!std::isfinite(last)) throw NumericError("vae pretrain loss is non-finite");
    g.backward(loss);
    std::map<std::string, Tensor<T>> grads;
    collect_grads(p, grads);
    opt.step(store, grads);
    if (log && (it % 100 == 0 || it + 1 == cfg.vae_iters))
      *log << "vae_step=" << it << " recon_mse=" << detail::fmt_g(last) << "\n";
  }
  return last;
}

// Frozen-VAE round trip, the recon-quality probe.
template <class T>
Video<T> vae_roundtrip(const ParamStore<T>& store, const ModelSpec& spec,
                       const Video<T>& v) {
  Graph<T> g;
  Binding<T> p{&g, &store, &freeze_all()};
  int x = g.constant(video_tensor(v));
  int y = vae_decode(g, p, vae_encode(g, p, x, spec.vae), spec.vae);
  return tensor_video(g.val(y));
}

struct TrainResult {
  LossValues last;
  long steps_done = 0;
};

// The main loop: sample clip, degrade, CFCA, fuse/assemble, condition,
// encode, one-step refine, decode, four-term loss, AdamW on the trainable
// set for the arm (VAE always frozen). Bit-deterministic given the seed. A
// non-finite loss or parameter aborts with the last good parameters restored
// (and checkpointed when a path is given).
template <class T>
TrainResult train(ParamStore<T>& store, const ModelSpec& spec,
                  const std::vector<SceneSpec>& corpus, const TrainConfig& cfg,
                  ArmMode mode = ArmMode::Full, std::ostream* log = nullptr,
                  const std::string& ckpt_path = "") {
  validate_train(cfg, spec);
  if (corpus.empty()) throw ConfigError("train: empty corpus");
  if (arm_uses_diffusion(mode) &&
      ((cfg.crop_h / spec.scales.phi_s) % 4 != 0 ||
       (cfg.crop_w / spec.scales.phi_s) % 4 != 0))
    throw ConfigError("train: low-res crop must be divisible by 4 for VRG");

  LossWeights weights;
  weights.gamma_consis = cfg.gamma_consis;
  FeatureStack<T> features;  // fixed seed: the loss is comparable across runs
  FlowEstimatorConfig<T> bm_cfg;

  AdamW<T> opt;
  opt.lr = cfg.lr;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;

  RngStream pick = derive_stream(cfg.seed, "train.order");
  RngStream degs = derive_stream(cfg.seed, "train.degrade");

  ParamStore<T> last_good = store;
  TrainResult res;
  auto abort_to_last_good = [&]() {
    store = last_good;
    if (!ckpt_path.empty())
      save_checkpoint(ckpt_path, store, train_meta<T>(cfg, spec, mode));
  };

  for (long it = 0; it < cfg.iters; ++it) {
    std::map<std::string, Tensor<T>> grads;
    LossValues avg;
    try {
      for (int b = 0; b < cfg.batch; ++b) {
        const SceneSpec& sc = corpus[pick.below(corpus.size())];
        ClipWithTruth<T> clip = generate_clip<T>(sc);
        DegradationConfig dc = cfg.degrade;
        dc.scales = spec.scales;
        dc.seed = degs.next_u64();
        TrainingPair<T> pair = make_pair(clip.video, dc);

        PairFlows<T> kf =
            cfg.truth_flows
                ? keyframe_truth_flows<T>(clip.shapes, pair.lq.t, spec.scales,
                                          clip.video.h, clip.video.w)
                : consecutive_flows(pair.lq, bm_cfg);
        CfcaBatch<T> cfca = prepare_cfca(pair.lq, kf, spec, mode);

        Graph<T> g;
        Binding<T> p{&g, &store, &frozen_set_for(mode)};
        RestoreNodes<T> nodes =
            build_restore_graph(g, p, pair.lq, cfca, spec, mode, false);
        int hq = g.constant(video_tensor(pair.hq));

        LossParts parts;
        if (arm_uses_diffusion(mode)) {
          Binding<T> frozen{&g, &store, &freeze_all()};
          int z_h = vae_encode(g, frozen, hq, spec.vae);
          parts.latent = latent_loss(g, nodes.z_st, z_h);
        } else {
          parts.latent = g.constant(Tensor<T>({1}));  // term absent: zero
        }
        auto [rec, perc] = pixel_losses(g, nodes.out, hq, features);
        parts.rec = rec;
        parts.perc = perc;
        auto ffwd = std::make_shared<std::vector<FlowField<T>>>(
            std::move(clip.true_flow_fwd));
        auto fbwd = std::make_shared<std::vector<FlowField<T>>>(
            std::move(clip.true_flow_bwd));
        parts.consis = temporal_consistency_loss<T>(g, nodes.out, ffwd, fbwd);

        LossValues vals;
        int total = total_loss(g, parts, weights, &vals);
        g.backward(total);
        collect_grads(p, grads);
        double inv = 1.0 / cfg.batch;
        avg.latent += vals.latent * inv;
        avg.rec += vals.rec * inv;
        avg.perc += vals.perc * inv;
        avg.consis += vals.consis * inv;
        avg.total += vals.total * inv;
      }
    } catch (const NumericError&) {
      abort_to_last_good();
      throw;
    }

    for (auto& [name, t] : grads)
      for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(t[i] / cfg.batch);
    opt.step(store, grads);
    if (!detail::store_finite(store)) {
      abort_to_last_good();
      throw NumericError("training diverged at step " + std::to_string(it));
    }
    last_good = store;
    res.last = avg;
    res.steps_done = it + 1;
    if (log)
      *log << "step=" << it << " latent=" << detail::fmt_g(avg.latent)
           << " rec=" << detail::fmt_g(avg.rec)
           << " perc=" << detail::fmt_g(avg.perc)
           << " consis=" << detail::fmt_g(avg.consis)
           << " total=" << detail::fmt_g(avg.total) << "\n";
  }

  if (!ckpt_path.empty())
    save_checkpoint(ckpt_path, store, train_meta<T>(cfg, spec, mode));
  return res;
}

// A restorer closes over everything needed to map one degraded clip back to
// full resolution; eval_corpus runs one over a held-out set.
template <class T>
using Restorer =
    std::function<Video<T>(const ClipWithTruth<T>&, const TrainingPair<T>&)>;

template <class T>
Restorer<T> model_restorer(const ParamStore<T>& store, const ModelSpec& spec,
                           ArmMode mode, bool truth_flows) {
  return [&store, spec, mode, truth_flows](const ClipWithTruth<T>& clip,
                                           const TrainingPair<T>& pair) {
    PairFlows<T> kf;
    if (truth_flows) {
      kf = keyframe_truth_flows<T>(clip.shapes, pair.lq.t, spec.scales,
                                   clip.video.h, clip.video.w);
    } else {
      FlowEstimatorConfig<T> bm;
      kf = consecutive_flows(pair.lq, bm);
    }
    CfcaBatch<T> cfca = prepare_cfca(pair.lq, kf, spec, mode);
    Graph<T> g;
    Binding<T> p{&g, &store, &freeze_all()};
    RestoreNodes<T> nodes =
        build_restore_graph(g, p, pair.lq, cfca, spec, mode, true);
    return tensor_video(g.val(nodes.out));
  };
}

template <class T>
Restorer<T> baseline_restorer(const ScaleFactors& sc) {
  return [sc](const ClipWithTruth<T>&, const TrainingPair<T>& pair) {
    return baseline_restore(pair.lq, sc);
  };
}

// Deterministic held-out evaluation: per-clip degradation seeds depend only
// on (seed, clip index), so different restorers see identical inputs.
template <class T>
MetricReport eval_corpus(const std::vector<SceneSpec>& held_out,
                         const DegradationConfig& deg, const ScaleFactors& sc,
                         std::uint64_t seed, const Restorer<T>& restorer,
                         const FlowEstimatorConfig<T>& tof_cfg,
                         const FeatureStack<T>& fs,
                         const std::string& fingerprint = "") {
  MetricReport r;
  r.config_fingerprint = fingerprint;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    ClipWithTruth<T> clip = generate_clip<T>(held_out[i]);
    DegradationConfig dc = deg;
    dc.scales = sc;
    dc.seed = derive_stream(seed, "eval.degrade", i).next_u64();
    TrainingPair<T> pair = make_pair(clip.video, dc);
    Video<T> out = restorer(clip, pair);
    accumulate_metrics(r, "clip" + std::to_string(i), out, pair.hq, tof_cfg, fs);
  }
  r.finalize();
  return r;
}

struct AblationOutcome {
  std::string arm;
  MetricReport report;
};

// Matched-budget arm comparison: one corpus, one held-out set, one shared
// VAE pretraining, identical seeds; arms differ only in the intended factor.
template <class T>
std::vector<AblationOutcome> ablate(const ModelSpec& spec, const TrainConfig& cfg,
                                    const std::vector<ArmMode>& arms,
                                    int held_out_clips = 12,
                                    std::ostream* log = nullptr) {
  std::vector<SceneSpec> corpus = make_corpus(cfg.seed, "corpus", cfg.corpus_clips,
                                              cfg.crop_t, cfg.crop_h, cfg.crop_w);
  std::vector<SceneSpec> held = make_corpus(cfg.seed, "heldout", held_out_clips,
                                            cfg.crop_t, cfg.crop_h, cfg.crop_w);
  ParamStore<T> base;
  register_model(base, cfg.seed, spec);
  bool any_diffusion = false;
  for (ArmMode m : arms) any_diffusion = any_diffusion || arm_uses_diffusion(m);
  if (any_diffusion) pretrain_vae(base, spec, corpus, cfg, log);

  FeatureStack<T> fs;
  FlowEstimatorConfig<T> tof_cfg;
  std::vector<AblationOutcome> out;
  for (ArmMode m : arms) {
    ParamStore<T> s = base;
    train(s, spec, corpus, cfg, m, log);
    MetricReport rep = eval_corpus<T>(
        held, cfg.degrade, spec.scales, cfg.seed,
        model_restorer<T>(s, spec, m, cfg.truth_flows), tof_cfg, fs,
        std::string("arm=") + arm_name(m));
    if (log)
      *log << "arm=" << arm_name(m) << " psnr=" << detail::fmt_g(rep.mean_psnr)
           << " ssim=" << detail::fmt_g(rep.mean_ssim)
           << " tof=" << detail::fmt_g(rep.mean_tof)
           << " tlp=" << detail::fmt_g(rep.mean_tlp) << "\n";
    out.push_back({arm_name(m), std::move(rep)});
  }
  return out;
}

}  // namespace stvsr
