#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "stvsr/graph.hpp"
#include "stvsr/nn.hpp"
#include "stvsr/rng.hpp"

using namespace stvsr;
using namespace stvsr::ops;

namespace {

using Build = std::function<int(Graph<double>&, const std::vector<int>&)>;

Tensor<double> rand_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central-difference check of d(root)/d(input) for every element of every
// input. The builder is re-invoked on perturbed copies, so it must be a pure
// function of the parameter values.
double max_grad_err(std::vector<Tensor<double>> inputs, const Build& build,
                    double eps = 1e-6) {
  Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : inputs) ids.push_back(g.param(t));
  int root = build(g, ids);
  REQUIRE(g.val(root).numel() == 1);
  g.backward(root);

  auto eval = [&](const std::vector<Tensor<double>>& in) {
    Graph<double> gg;
    std::vector<int> jj;
    for (const auto& t : in) jj.push_back(gg.param(t));
    return static_cast<double>(gg.val(build(gg, jj))[0]);
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      auto plus = inputs;
      plus[i][j] += eps;
      auto minus = inputs;
      minus[i][j] -= eps;
      double num = (eval(plus) - eval(minus)) / (2.0 * eps);
      double ana = g.has_grad(ids[i]) ? g.grad(ids[i])[j] : 0.0;
      double denom = std::max({std::abs(num), std::abs(ana), 1e-2});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  return worst;
}

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("gradients: elementwise arithmetic") {
  RngStream rng(101);
  auto a = rand_tensor({3, 4}, rng);
  auto b = rand_tensor({3, 4}, rng);

  CHECK(max_grad_err({a, b}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, mul(g, add(g, p[0], p[1]), sub(g, p[0], p[1])));
        }) < kTol);

  CHECK(max_grad_err({a}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, scale(g, p[0], -2.5));
        }) < kTol);
}

TEST_CASE("gradients: bias_add broadcasts over rows") {
  RngStream rng(102);
  auto x = rand_tensor({4, 3}, rng);
  auto b = rand_tensor({3}, rng);
  CHECK(max_grad_err({x, b}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, mul(g, bias_add(g, p[0], p[1]),
                                 bias_add(g, p[0], p[1])));
        }) < kTol);
}

TEST_CASE("gradients: matmul in all four transpose modes") {
  RngStream rng(103);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      auto a = rand_tensor(ta ? std::vector<int>{4, 2} : std::vector<int>{2, 4}, rng);
      auto b = rand_tensor(tb ? std::vector<int>{3, 4} : std::vector<int>{4, 3}, rng);
      CHECK(max_grad_err({a, b},
                         [ta, tb](Graph<double>& g, const std::vector<int>& p) {
                           int y = matmul(g, p[0], p[1], ta, tb);
                           return mean_all(g, mul(g, y, y));
                         }) < kTol);
    }
}

TEST_CASE("gradients: conv2d with stride and padding") {
  RngStream rng(104);
  auto x = rand_tensor({2, 5, 6, 3}, rng);
  auto w = rand_tensor({3, 3, 3, 2}, rng, -0.5, 0.5);

  // 'same' padding, unit stride
  CHECK(max_grad_err({x, w}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = conv2d(g, p[0], p[1]);
          return mean_all(g, mul(g, y, y));
        }) < kTol);

  // stride 2, explicit padding 1
  CHECK(max_grad_err({x, w}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = conv2d(g, p[0], p[1], 2, 2, 1, 1);
          return mean_all(g, mul(g, y, y));
        }) < kTol);

  // valid (zero padding), asymmetric kernel
  auto w2 = rand_tensor({1, 3, 3, 2}, rng, -0.5, 0.5);
  CHECK(max_grad_err({x, w2}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = conv2d(g, p[0], p[1], 1, 1, 0, 0);
          return mean_all(g, mul(g, y, y));
        }) < kTol);
}

TEST_CASE("gradients: bilinear resize up and down") {
  RngStream rng(105);
  auto x = rand_tensor({1, 4, 4, 2}, rng);
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = resize_bilinear_nhwc(g, p[0], 7, 9);
          return mean_all(g, mul(g, y, y));
        }) < kTol);
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = resize_bilinear_nhwc(g, p[0], 2, 2);
          return mean_all(g, mul(g, y, y));
        }) < kTol);
}

TEST_CASE("gradients: smooth activations") {
  RngStream rng(106);
  auto x = rand_tensor({3, 5}, rng, -2.0, 2.0);
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, sigmoid(g, p[0]));
        }) < kTol);
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, silu(g, p[0]));
        }) < kTol);
}

TEST_CASE("gradients: kinked activations away from their kinks") {
  // Values are kept > 0.05 from every kink so central differences are valid.
  RngStream rng(107);
  Tensor<double> x({4, 4});
  for (auto& v : x.data) {
    v = rng.uniform(0.1, 0.9);
    if (rng.uniform() < 0.5) v = -v;
  }
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, relu(g, p[0]));
        }) < kTol);
  CHECK(max_grad_err({x}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, abs_(g, p[0]));
        }) < kTol);

  Tensor<double> inside({3, 3});
  for (auto& v : inside.data) v = rng.uniform(0.1, 0.9);
  CHECK(max_grad_err({inside}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = clamp01(g, p[0]);
          return mean_all(g, mul(g, y, y));
        }) < kTol);

  // Saturated clamp passes no gradient at all.
  Graph<double> g;
  Tensor<double> hot({2}, 2.0);
  int p = g.param(hot);
  g.backward(mean_all(g, clamp01(g, p)));
  if (g.has_grad(p))
    for (std::size_t i = 0; i < g.grad(p).numel(); ++i)
      CHECK(g.grad(p)[i] == 0.0);
}

TEST_CASE("gradients: softmax and channel normalization") {
  RngStream rng(108);
  auto x = rand_tensor({3, 4}, rng, -2.0, 2.0);
  auto w = rand_tensor({3, 4}, rng);
  CHECK(max_grad_err({x, w}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, mul(g, softmax_rows(g, p[0]), p[1]));
        }) < kTol);
  CHECK(max_grad_err({x, w}, [](Graph<double>& g, const std::vector<int>& p) {
          return mean_all(g, mul(g, normalize_channels(g, p[0]), p[1]));
        }) < kTol);
}

TEST_CASE("gradients: concat, slice, reshape route correctly") {
  RngStream rng(109);
  auto a = rand_tensor({2, 3}, rng);
  auto b = rand_tensor({2, 2}, rng);
  CHECK(max_grad_err({a, b}, [](Graph<double>& g, const std::vector<int>& p) {
          int cat = concat(g, {p[0], p[1]}, 1);
          int sl = slice(g, cat, 1, 1, 3);  // straddles the seam
          int rs = reshape(g, sl, {6});
          return mean_all(g, mul(g, rs, rs));
        }) < kTol);
}

TEST_CASE("gradients: mse and l1 losses") {
  RngStream rng(110);
  auto a = rand_tensor({3, 4}, rng);
  auto b = rand_tensor({3, 4}, rng);  // a != b everywhere w.p. 1
  CHECK(max_grad_err({a, b}, [](Graph<double>& g, const std::vector<int>& p) {
          return mse(g, p[0], p[1]);
        }) < kTol);
  CHECK(max_grad_err({a, b}, [](Graph<double>& g, const std::vector<int>& p) {
          return l1(g, p[0], p[1]);
        }) < kTol);
}

TEST_CASE("gradients: temporal consistency with fractional flows") {
  RngStream rng(111);
  int t = 3, h = 4, w = 5, c = 2;
  auto x = rand_tensor({t, h, w, c}, rng, 0.05, 0.95);
  auto fields = std::make_shared<std::vector<FlowField<double>>>();
  auto fields_b = std::make_shared<std::vector<FlowField<double>>>();
  for (int i = 0; i + 1 < t; ++i) {
    FlowField<double> f(h, w, i, i + 1), b(h, w, i + 1, i);
    for (auto& v : f.data) v = rng.uniform(-1.2, 1.2);
    for (auto& v : b.data) v = rng.uniform(-1.2, 1.2);
    fields->push_back(f);
    fields_b->push_back(b);
  }
  std::shared_ptr<const std::vector<FlowField<double>>> fwd = fields;
  std::shared_ptr<const std::vector<FlowField<double>>> bwd = fields_b;
  CHECK(max_grad_err({x}, [&](Graph<double>& g, const std::vector<int>& p) {
          return temporal_consistency(g, p[0], fwd, bwd);
        }) < 1e-4);  // |.| kinks can sit near sample points; slightly looser

  // Shape guards.
  Graph<double> g;
  int p = g.param(x);
  std::shared_ptr<const std::vector<FlowField<double>>> short_fwd =
      std::make_shared<std::vector<FlowField<double>>>(
          std::vector<FlowField<double>>{(*fwd)[0]});
  CHECK_THROWS_AS(temporal_consistency(g, p, short_fwd, bwd), ShapeError);
}

TEST_CASE("gradients: dense layer and attention composite") {
  RngStream rng(112);
  auto x = rand_tensor({3, 4}, rng);
  auto w = rand_tensor({4, 2}, rng);
  auto b = rand_tensor({2}, rng);
  CHECK(max_grad_err({x, w, b}, [](Graph<double>& g, const std::vector<int>& p) {
          int y = dense(g, p[0], p[1], p[2]);
          return mean_all(g, mul(g, y, y));
        }) < kTol);

  // Cross attention: 2 queries of width 4, 3 kv tokens of width 6, 2 heads.
  auto q = rand_tensor({2, 4}, rng);
  auto kv = rand_tensor({3, 6}, rng);
  auto wq = rand_tensor({4, 4}, rng, -0.5, 0.5);
  auto wk = rand_tensor({6, 4}, rng, -0.5, 0.5);
  auto wv = rand_tensor({6, 4}, rng, -0.5, 0.5);
  auto wo = rand_tensor({4, 4}, rng, -0.5, 0.5);
  CHECK(max_grad_err({q, kv, wq, wk, wv, wo},
                     [](Graph<double>& g, const std::vector<int>& p) {
                       int y = mhca(g, p[0], p[1], p[2], p[3], p[4], p[5], 2);
                       return mean_all(g, mul(g, y, y));
                     }) < kTol);
}

TEST_CASE("graph rejects non-scalar backward roots and constant roots") {
  Graph<double> g;
  int p = g.param(Tensor<double>({2, 2}, 1.0));
  CHECK_THROWS_AS(g.backward(p), ShapeError);
  int c = g.constant(Tensor<double>({1}, 3.0));
  CHECK_THROWS_AS(g.backward(c), DomainError);
}

TEST_CASE("duplicate bindings of one parameter sum their gradients") {
  // Using one stored tensor twice in a graph creates two nodes; the collected
  // gradient must be the total derivative (sum over both uses).
  ParamStore<double> store;
  store.add("w", {2}).data = {0.5, -0.25};
  std::vector<std::string> none;
  Graph<double> g;
  Binding<double> bind{&g, &store, &none, {}};
  int a = bind("w");
  int b = bind("w");
  g.backward(mean_all(g, mul(g, a, b)));  // f = mean(w*w), df/dw = w
  std::map<std::string, Tensor<double>> grads;
  collect_grads(bind, grads);
  REQUIRE(grads.count("w"));
  CHECK(grads["w"][0] == Catch::Approx(0.5));
  CHECK(grads["w"][1] == Catch::Approx(-0.25));
}

TEST_CASE("frozen prefixes bind as constants") {
  ParamStore<double> store;
  store.add("vae.w", {1}).data = {2.0};
  store.add("net.w", {1}).data = {3.0};
  std::vector<std::string> frozen = {"vae."};
  Graph<double> g;
  Binding<double> bind{&g, &store, &frozen, {}};
  int a = bind("vae.w");
  int b = bind("net.w");
  CHECK_FALSE(g.wants_grad(a));
  CHECK(g.wants_grad(b));
  CHECK(bind.bound.size() == 1);

  // Freezing everything via the empty prefix.
  std::vector<std::string> all = {""};
  Binding<double> froze{&g, &store, &all, {}};
  CHECK_FALSE(g.wants_grad(froze("net.w")));
}

TEST_CASE("adamw takes a verifiable first step and skips missing grads") {
  ParamStore<double> store;
  store.add("w", {1}).data = {1.0};
  store.add("untouched", {1}).data = {5.0};
  AdamW<double> opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.0;
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("w", Tensor<double>({1}, 0.5));
  opt.step(store, grads);
  // First step: m_hat = g, v_hat = g^2, update = g/(|g|+eps) ~ sign(g).
  CHECK(store.get("w")[0] == Catch::Approx(1.0 - 0.1).epsilon(1e-6));
  CHECK(store.get("untouched")[0] == 5.0);

  // Decoupled decay shrinks the weight even with zero gradient.
  AdamW<double> decay;
  decay.lr = 0.1;
  decay.weight_decay = 0.5;
  std::map<std::string, Tensor<double>> zero;
  zero.emplace("w", Tensor<double>({1}));
  double before = store.get("w")[0];
  decay.step(store, zero);
  CHECK(store.get("w")[0] == Catch::Approx(before * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("sinusoidal embedding has unit-range components and even dim") {
  Tensor<float> e = sinusoidal_embedding<float>(799.0, 8);
  REQUIRE(e.numel() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(e[i] >= -1.0f);
    CHECK(e[i] <= 1.0f);
  }
  CHECK_THROWS_AS(sinusoidal_embedding<float>(1.0, 7), ConfigError);
  // Distinct timesteps embed distinctly.
  Tensor<float> e2 = sinusoidal_embedding<float>(1.0, 8);
  CHECK(e.data != e2.data);
}
