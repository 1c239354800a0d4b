#pragma once

#include <string>
#include <vector>

#include "stvsr/graph.hpp"
#include "stvsr/nn.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Linear noise schedule: sigma(t) = t / t_max, monotone in t, sigma(0) = 0.
struct NoiseSchedule {
  int t_max = 1000;

  double sigma(int t) const {
    if (t_max < 1) throw ConfigError("schedule: t_max must be >= 1");
    if (t < 0 || t > t_max)
      throw DomainError("schedule: t must lie in [0, t_max]");
    return static_cast<double>(t) / static_cast<double>(t_max);
  }
};

struct DiffusionConfig {
  NoiseSchedule schedule;
  int t = 799;  // single refinement step
};

// Frame-wise VAE: spatial stride 4, latent width cz, no temporal coupling.
// The encoder is deterministic (no sampling head); the decoder ends in a
// sigmoid, so reconstructions always land in [0,1].
struct VaeConfig {
  int base = 32;
  int cz = 16;
  int r = 4;  // spatial stride; fixed by the two stride-2 stages
};

template <class T>
void register_vae(ParamStore<T>& store, std::uint64_t seed, const VaeConfig& cfg) {
  auto conv = [&](const std::string& name, int kh, int kw, int ci, int co) {
    init_he(store.add(name + ".w", {kh, kw, ci, co}), seed, name + ".w",
            static_cast<std::size_t>(kh) * kw * ci);
    store.add(name + ".b", {co});
  };
  conv("vae.enc.conv1", 3, 3, 3, cfg.base);
  conv("vae.enc.conv2", 3, 3, cfg.base, cfg.base);
  conv("vae.enc.conv3", 3, 3, cfg.base, cfg.cz);
  conv("vae.dec.conv1", 3, 3, cfg.cz, cfg.base);
  conv("vae.dec.conv2", 3, 3, cfg.base, cfg.base);
  conv("vae.dec.conv3", 3, 3, cfg.base, cfg.base / 2);
  conv("vae.dec.conv4", 3, 3, cfg.base / 2, 3);
}

template <class T>
int vae_encode(Graph<T>& g, Binding<T>& p, int x, const VaeConfig& cfg) {
  (void)cfg;
  int h = ops::conv2d(g, x, p("vae.enc.conv1.w"), 2, 2);
  h = ops::silu(g, ops::bias_add(g, h, p("vae.enc.conv1.b")));
  h = ops::conv2d(g, h, p("vae.enc.conv2.w"), 2, 2);
  h = ops::silu(g, ops::bias_add(g, h, p("vae.enc.conv2.b")));
  h = ops::conv2d(g, h, p("vae.enc.conv3.w"));
  return ops::bias_add(g, h, p("vae.enc.conv3.b"));
}

template <class T>
int vae_decode(Graph<T>& g, Binding<T>& p, int z, const VaeConfig& cfg) {
  (void)cfg;
  int h = ops::conv2d(g, z, p("vae.dec.conv1.w"));
  h = ops::silu(g, ops::bias_add(g, h, p("vae.dec.conv1.b")));
  h = ops::resize_bilinear_nhwc(g, h, g.val(h).dim(1) * 2, g.val(h).dim(2) * 2);
  h = ops::conv2d(g, h, p("vae.dec.conv2.w"));
  h = ops::silu(g, ops::bias_add(g, h, p("vae.dec.conv2.b")));
  h = ops::resize_bilinear_nhwc(g, h, g.val(h).dim(1) * 2, g.val(h).dim(2) * 2);
  h = ops::conv2d(g, h, p("vae.dec.conv3.w"));
  h = ops::silu(g, ops::bias_add(g, h, p("vae.dec.conv3.b")));
  h = ops::conv2d(g, h, p("vae.dec.conv4.w"));
  return ops::sigmoid(g, ops::bias_add(g, h, p("vae.dec.conv4.b")));
}

// Velocity network over [T, h, w, cz] latents: stem, broadcast timestep
// embedding, four residual blocks each with one cross-attention onto the
// condition tokens, one temporal mixing conv after the second block, and a
// zero-initialized head (so the untrained net predicts zero velocity and the
// sampler starts as identity).
struct VelocityConfig {
  int width = 48;
  int blocks = 2;
  int heads = 4;
  int temb_dim = 64;
  int cond_dim = 64;  // width of the condition tokens (VRG d)
};

template <class T>
void register_velocity(ParamStore<T>& store, std::uint64_t seed,
                       const VelocityConfig& cfg, int cz) {
  auto conv = [&](const std::string& name, int kh, int kw, int ci, int co,
                  bool zero = false) {
    Tensor<T>& w = store.add(name + ".w", {kh, kw, ci, co});
    if (!zero)
      init_he(w, seed, name + ".w", static_cast<std::size_t>(kh) * kw * ci);
    store.add(name + ".b", {co});
  };
  auto mat = [&](const std::string& name, int rows, int cols) {
    init_normal(store.add(name, {rows, cols}), seed, name,
                1.0 / std::sqrt(static_cast<double>(rows)));
  };
  conv("vnet.stem", 3, 3, cz, cfg.width);
  mat("vnet.temb.fc1.w", cfg.temb_dim, cfg.width);
  store.add("vnet.temb.fc1.b", {cfg.width});
  mat("vnet.temb.fc2.w", cfg.width, cfg.width);
  store.add("vnet.temb.fc2.b", {cfg.width});
  for (int i = 0; i < cfg.blocks; ++i) {
    std::string b = "vnet.block" + std::to_string(i);
    conv(b + ".conv1", 3, 3, cfg.width, cfg.width);
    conv(b + ".conv2", 3, 3, cfg.width, cfg.width);
    mat(b + ".attn.wq", cfg.width, cfg.width);
    mat(b + ".attn.wk", cfg.cond_dim, cfg.width);
    mat(b + ".attn.wv", cfg.cond_dim, cfg.width);
    store.add(b + ".attn.wo", {cfg.width, cfg.width});  // zero: block starts local
  }
  conv("vnet.temporal", 3, 1, cfg.width, cfg.width);
  conv("vnet.head", 3, 3, cfg.width, cz, /*zero=*/true);
}

template <class T>
int velocity_forward(Graph<T>& g, Binding<T>& p, int z, int t, int cond,
                     const NoiseSchedule& schedule, const VelocityConfig& cfg) {
  const Tensor<T>& zv = g.val(z);
  if (zv.rank() != 4) throw ShapeError("velocity: latent must be [T,h,w,cz]");
  schedule.sigma(t);  // range-check t
  int tt = zv.dim(0), h = zv.dim(1), w = zv.dim(2);

  int temb = g.constant([&] {
    Tensor<T> e = sinusoidal_embedding<T>(static_cast<double>(t), cfg.temb_dim);
    e.shape = {1, cfg.temb_dim};
    return e;
  }());
  temb = ops::silu(g, ops::dense(g, temb, p("vnet.temb.fc1.w"), p("vnet.temb.fc1.b")));
  temb = ops::dense(g, temb, p("vnet.temb.fc2.w"), p("vnet.temb.fc2.b"));
  temb = ops::reshape(g, temb, {cfg.width});

  int x = ops::conv2d(g, z, p("vnet.stem.w"));
  x = ops::bias_add(g, x, p("vnet.stem.b"));
  x = ops::bias_add(g, x, temb);

  for (int i = 0; i < cfg.blocks; ++i) {
    std::string b = "vnet.block" + std::to_string(i);
    int hh = ops::conv2d(g, x, p(b + ".conv1.w"));
    hh = ops::silu(g, ops::bias_add(g, hh, p(b + ".conv1.b")));
    hh = ops::conv2d(g, hh, p(b + ".conv2.w"));
    hh = ops::bias_add(g, hh, p(b + ".conv2.b"));
    int tokens = ops::reshape(g, hh, {tt * h * w, cfg.width});
    int att = mhca(g, tokens, cond, p(b + ".attn.wq"), p(b + ".attn.wk"),
                   p(b + ".attn.wv"), p(b + ".attn.wo"), cfg.heads);
    hh = ops::add(g, hh, ops::reshape(g, att, {tt, h, w, cfg.width}));
    x = ops::add(g, x, hh);
    if (i == 1) {  // single temporal mixing conv, mid-network
      int seq = ops::reshape(g, x, {1, tt, h * w, cfg.width});
      seq = ops::conv2d(g, seq, p("vnet.temporal.w"), 1, 1, 1, 0);
      seq = ops::bias_add(g, seq, p("vnet.temporal.b"));
      x = ops::add(g, x, ops::reshape(g, seq, {tt, h, w, cfg.width}));
    }
  }
  int v = ops::conv2d(g, x, p("vnet.head.w"));
  return ops::bias_add(g, v, p("vnet.head.b"));
}

// One-step latent refinement: z_st = z - sigma(t) * V(z, t, c), exactly.
template <class T>
int one_step_sample(Graph<T>& g, int z, int velocity, int t,
                    const NoiseSchedule& schedule) {
  require_same_shape(g.val(z), g.val(velocity), "one_step_sample");
  return ops::sub(g, z, ops::scale(g, velocity, schedule.sigma(t)));
}

}  // namespace stvsr
