#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stvsr/features.hpp"
#include "stvsr/graph.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

struct LossWeights {
  double latent = 1.0;
  double rec = 1.0;
  double perc = 1.0;
  double gamma_consis = 0.1;
};

inline void validate_loss_weights(const LossWeights& w) {
  for (double v : {w.latent, w.rec, w.perc, w.gamma_consis})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("loss weights must be finite and non-negative");
}

struct LossParts {
  int latent = -1, rec = -1, perc = -1, consis = -1;  // node ids
};

struct LossValues {
  double latent = 0, rec = 0, perc = 0, consis = 0, total = 0;
};

// Eq.-level pieces. Each is a plain mean reduction, so every term is zero at
// its fixed point and scale-stable across resolutions.

template <class T>
int latent_loss(Graph<T>& g, int z_st, int z_h) {
  return ops::mse(g, z_st, z_h);
}

template <class T>
std::pair<int, int> pixel_losses(Graph<T>& g, int i_st, int i_h,
                                 const FeatureStack<T>& features) {
  return {ops::mse(g, i_st, i_h), features.distance(g, i_st, i_h)};
}

template <class T>
int temporal_consistency_loss(
    Graph<T>& g, int i_st,
    std::shared_ptr<const std::vector<FlowField<T>>> flows_fwd,
    std::shared_ptr<const std::vector<FlowField<T>>> flows_bwd) {
  return ops::temporal_consistency(g, i_st, std::move(flows_fwd),
                                   std::move(flows_bwd));
}

// L = latent + rec + perc + gamma * consis. Non-finite terms abort with the
// offending term named; that is the trainer's NaN tripwire.
template <class T>
int total_loss(Graph<T>& g, const LossParts& parts, const LossWeights& w,
               LossValues* values = nullptr) {
  validate_loss_weights(w);
  struct Term {
    const char* name;
    int id;
    double weight;
  };
  const Term terms[] = {{"latent", parts.latent, w.latent},
                        {"rec", parts.rec, w.rec},
                        {"perc", parts.perc, w.perc},
                        {"consis", parts.consis, w.gamma_consis}};
  int out = -1;
  double total = 0.0;
  for (const Term& t : terms) {
    if (t.id < 0) throw ConfigError(std::string("total_loss: missing term ") + t.name);
    double v = static_cast<double>(g.val(t.id)[0]);
    if (!std::isfinite(v))
      throw NumericError(std::string("loss term '") + t.name + "' is non-finite");
    total += t.weight * v;
    int scaled = ops::scale(g, t.id, t.weight);
    out = (out < 0) ? scaled : ops::add(g, out, scaled);
  }
  if (!std::isfinite(total)) throw NumericError("total loss is non-finite");
  if (values) {
    values->latent = static_cast<double>(g.val(parts.latent)[0]);
    values->rec = static_cast<double>(g.val(parts.rec)[0]);
    values->perc = static_cast<double>(g.val(parts.perc)[0]);
    values->consis = static_cast<double>(g.val(parts.consis)[0]);
    values->total = total;
  }
  return out;
}

}  // namespace stvsr
