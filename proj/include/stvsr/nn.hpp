#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stvsr/common.hpp"
#include "stvsr/graph.hpp"
#include "stvsr/rng.hpp"
#include "stvsr/tensor.hpp"

namespace stvsr {

// Named parameters in a stable registration order; that order defines the
// checkpoint layout and every gradient-accumulation loop.
template <class T>
struct ParamStore {
  std::vector<std::string> order;
  std::map<std::string, Tensor<T>> params;

  Tensor<T>& add(const std::string& name, std::vector<int> shape) {
    if (params.count(name)) throw ConfigError("param already registered: " + name);
    order.push_back(name);
    return params.emplace(name, Tensor<T>(std::move(shape))).first->second;
  }

  bool has(const std::string& name) const { return params.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("unknown param: " + name);
    return it->second;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("unknown param: " + name);
    return it->second;
  }

  std::size_t total_elems() const {
    std::size_t n = 0;
    for (const auto& name : order) n += get(name).numel();
    return n;
  }
};

// Initializers. Each derives its own stream from (seed, name), so adding or
// reordering other parameters never changes a tensor's initial values.

template <class T>
void init_normal(Tensor<T>& t, std::uint64_t seed, const std::string& name,
                 double stddev) {
  RngStream rng = derive_stream(seed, "init." + name);
  for (T& v : t.data) v = static_cast<T>(rng.normal() * stddev);
}

template <class T>
void init_he(Tensor<T>& t, std::uint64_t seed, const std::string& name,
             std::size_t fan_in) {
  init_normal(t, seed, name, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

template <class T>
void init_identity(Tensor<T>& t) {
  if (t.rank() != 2 || t.dim(0) != t.dim(1))
    throw ShapeError("identity init needs a square matrix");
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j)
      t[static_cast<std::size_t>(i) * t.dim(1) + j] = (i == j) ? T(1) : T(0);
}

// Bridges a ParamStore into a graph. Frozen parameters enter as constants,
// so no gradient work is ever done for them.
template <class T>
struct Binding {
  Graph<T>* g = nullptr;
  const ParamStore<T>* store = nullptr;
  const std::vector<std::string>* frozen_prefixes = nullptr;
  std::vector<std::pair<std::string, int>> bound;  // trainable nodes only

  bool frozen(const std::string& name) const {
    if (!frozen_prefixes) return false;
    for (const auto& p : *frozen_prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  int operator()(const std::string& name) {
    const Tensor<T>& t = store->get(name);
    if (frozen(name)) return g->constant(t);
    int id = g->param(t);
    bound.emplace_back(name, id);
    return id;
  }
};

// Sum this graph's parameter gradients into an external accumulator
// (per-name), creating zero tensors on first touch. Parameters that never
// received gradient contribute zero.
template <class T>
void collect_grads(const Binding<T>& binding,
                   std::map<std::string, Tensor<T>>& sums) {
  for (const auto& [name, id] : binding.bound) {
    auto it = sums.find(name);
    if (it == sums.end())
      it = sums.emplace(name, Tensor<T>(binding.g->val(id).shape)).first;
    if (!binding.g->has_grad(id)) continue;
    const Tensor<T>& gr = binding.g->grad(id);
    for (std::size_t i = 0; i < gr.numel(); ++i) it->second[i] += gr[i];
  }
}

// Decoupled-weight-decay Adam. Moments are kept per parameter name and in
// registration order, so a rerun with identical gradients is bit-identical.
template <class T>
struct AdamW {
  double lr = 5e-5;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long steps = 0;
  std::map<std::string, Tensor<T>> m, v;

  void step(ParamStore<T>& store, const std::map<std::string, Tensor<T>>& grads) {
    ++steps;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    for (const auto& name : store.order) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;  // frozen or unused this step
      Tensor<T>& p = store.get(name);
      require_same_shape(p, git->second, "adamw");
      Tensor<T>& mm = m.try_emplace(name, Tensor<T>(p.shape)).first->second;
      Tensor<T>& vv = v.try_emplace(name, Tensor<T>(p.shape)).first->second;
      for (std::size_t i = 0; i < p.numel(); ++i) {
        double gi = static_cast<double>(git->second[i]);
        double mi = beta1 * mm[i] + (1.0 - beta1) * gi;
        double vi = beta2 * vv[i] + (1.0 - beta2) * gi * gi;
        mm[i] = static_cast<T>(mi);
        vv[i] = static_cast<T>(vi);
        double upd = (mi / bc1) / (std::sqrt(vi / bc2) + eps);
        p[i] = static_cast<T>(p[i] - lr * (upd + weight_decay * p[i]));
      }
    }
  }
};

// Multi-head cross attention from primitives: q_in [Lq,d] attends to
// kv_in [Lkv,d]; all four projections are bias-free d x d matrices.
template <class T>
int mhca(Graph<T>& g, int q_in, int kv_in, int wq, int wk, int wv, int wo,
         int heads) {
  int d = g.val(q_in).dim(1);
  if (heads < 1 || d % heads != 0) throw ConfigError("mhca: heads must divide d");
  int dk = d / heads;
  int q = ops::matmul(g, q_in, wq);
  int k = ops::matmul(g, kv_in, wk);
  int v = ops::matmul(g, kv_in, wv);
  std::vector<int> outs;
  for (int hh = 0; hh < heads; ++hh) {
    int qh = ops::slice(g, q, 1, hh * dk, dk);
    int kh = ops::slice(g, k, 1, hh * dk, dk);
    int vh = ops::slice(g, v, 1, hh * dk, dk);
    int scores = ops::scale(g, ops::matmul(g, qh, kh, false, true),
                            1.0 / std::sqrt(static_cast<double>(dk)));
    outs.push_back(ops::matmul(g, ops::softmax_rows(g, scores), vh));
  }
  return ops::matmul(g, ops::concat(g, outs, 1), wo);
}

// Standard sinusoidal embedding of an (integer) timestep.
template <class T>
Tensor<T> sinusoidal_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding dim must be even");
  Tensor<T> out({dim});
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    out[static_cast<std::size_t>(i)] = static_cast<T>(std::sin(t * freq));
    out[static_cast<std::size_t>(half + i)] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

// Checkpoints: "STVC" magic, u32 format version, u64 manifest length, JSON
// manifest (dtype, tensor names/shapes in order, free-form string metadata),
// then raw tensor payloads in manifest order. Loads are exact: same dtype,
// every manifest tensor present, byte count checked.

namespace detail {

template <class U>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store,
                     const std::map<std::string, std::string>& meta = {}) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["dtype"] = detail::dtype_name<T>();
  manifest["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& name : store.order) {
    const Tensor<T>& t = store.get(name);
    tensors.push_back({{"name", name}, {"shape", t.shape}});
  }
  manifest["tensors"] = tensors;
  std::string js = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write("STVC", 4);
  std::uint32_t ver = 1;
  std::uint64_t jlen = js.size();
  f.write(reinterpret_cast<const char*>(&ver), 4);
  f.write(reinterpret_cast<const char*>(&jlen), 8);
  f.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& name : store.order) {
    const Tensor<T>& t = store.get(name);
    f.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
  }
  if (!f) throw IoError("short write while saving checkpoint: " + path);
}

template <class T>
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   ParamStore<T>& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "STVC", 4) != 0)
    throw ParseError("checkpoint: bad magic", 0);
  std::uint32_t ver = 0;
  std::uint64_t jlen = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  f.read(reinterpret_cast<char*>(&jlen), 8);
  if (!f || ver != 1) throw ParseError("checkpoint: unsupported version", 4);
  std::string js(jlen, '\0');
  f.read(js.data(), static_cast<std::streamsize>(jlen));
  if (!f) throw ParseError("checkpoint: truncated manifest", 16);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(js);
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint: manifest is not valid JSON: ") +
                         e.what(),
                     16);
  }
  if (manifest.value("dtype", "") != detail::dtype_name<T>())
    throw ParseError("checkpoint: dtype mismatch", 16);

  store = ParamStore<T>{};
  for (const auto& entry : manifest.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor<T>& t = store.add(name, shape);
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!f) throw ParseError("checkpoint: truncated tensor payload: " + name,
                             16 + jlen);
  }
  std::map<std::string, std::string> meta;
  if (manifest.contains("meta"))
    for (auto it = manifest["meta"].begin(); it != manifest["meta"].end(); ++it)
      meta[it.key()] = it.value().get<std::string>();
  return meta;
}

}  // namespace stvsr
