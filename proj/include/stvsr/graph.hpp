#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/flow.hpp"
#include "stvsr/tensor.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks
// them in reverse. A node's backward fn receives the graph and the node's own
// id, reads grad(self) and accumulates into its parents. Values live for the
// graph's lifetime; gradients are allocated lazily on first accumulation. All
// loops run in a fixed order, so repeated runs are bit-identical.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  int constant(Tensor<T> v) { return add_node(std::move(v), false, nullptr); }
  int param(Tensor<T> v) { return add_node(std::move(v), true, nullptr); }

  int add_node(Tensor<T> v, bool requires_grad, BackwardFn bw) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), requires_grad, std::move(bw)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  Tensor<T>& val(int id) { return nodes_[static_cast<std::size_t>(id)].val; }

  bool wants_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  bool has_grad(int id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.shape.empty();
  }

  // Gradient buffer, zero-initialized on first touch. Callers must check
  // wants_grad first; accumulating into a non-grad node is a logic error.
  Tensor<T>& grad_acc(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.shape.empty()) n.grad = Tensor<T>(n.val.shape);
    return n.grad;
  }

  const Tensor<T>& grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.shape.empty())
      throw NumericError("graph: gradient never reached node");
    return n.grad;
  }

  void backward(int root) {
    if (val(root).numel() != 1)
      throw ShapeError("graph: backward root must be a scalar");
    if (!wants_grad(root))
      throw DomainError("graph: backward root does not depend on any parameter");
    grad_acc(root)[0] = T(1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.bw && !n.grad.shape.empty()) n.bw(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn bw;
  };
  std::vector<Node> nodes_;
};

namespace ops {

template <class T>
bool any_grad(const Graph<T>& g, std::initializer_list<int> ids) {
  for (int id : ids)
    if (g.wants_grad(id)) return true;
  return false;
}

template <class T>
int add(Graph<T>& g, int a, int b) {
  require_same_shape(g.val(a), g.val(b), "add");
  Tensor<T> out(g.val(a).shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] + g.val(b)[i];
  return g.add_node(std::move(out), any_grad(g, {a, b}),
                    [a, b](Graph<T>& gr, int self) {
                      const Tensor<T>& go = gr.grad(self);
                      for (int p : {a, b}) {
                        if (!gr.wants_grad(p)) continue;
                        Tensor<T>& gp = gr.grad_acc(p);
                        for (std::size_t i = 0; i < go.numel(); ++i) gp[i] += go[i];
                      }
                    });
}

template <class T>
int sub(Graph<T>& g, int a, int b) {
  require_same_shape(g.val(a), g.val(b), "sub");
  Tensor<T> out(g.val(a).shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] - g.val(b)[i];
  return g.add_node(std::move(out), any_grad(g, {a, b}),
                    [a, b](Graph<T>& gr, int self) {
                      const Tensor<T>& go = gr.grad(self);
                      if (gr.wants_grad(a)) {
                        Tensor<T>& ga = gr.grad_acc(a);
                        for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
                      }
                      if (gr.wants_grad(b)) {
                        Tensor<T>& gb = gr.grad_acc(b);
                        for (std::size_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
                      }
                    });
}

template <class T>
int mul(Graph<T>& g, int a, int b) {
  require_same_shape(g.val(a), g.val(b), "mul");
  Tensor<T> out(g.val(a).shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] * g.val(b)[i];
  return g.add_node(std::move(out), any_grad(g, {a, b}),
                    [a, b](Graph<T>& gr, int self) {
                      const Tensor<T>& go = gr.grad(self);
                      if (gr.wants_grad(a)) {
                        Tensor<T>& ga = gr.grad_acc(a);
                        const Tensor<T>& vb = gr.val(b);
                        for (std::size_t i = 0; i < go.numel(); ++i)
                          ga[i] += go[i] * vb[i];
                      }
                      if (gr.wants_grad(b)) {
                        Tensor<T>& gb = gr.grad_acc(b);
                        const Tensor<T>& va = gr.val(a);
                        for (std::size_t i = 0; i < go.numel(); ++i)
                          gb[i] += go[i] * va[i];
                      }
                    });
}

template <class T>
int scale(Graph<T>& g, int a, double s) {
  Tensor<T> out(g.val(a).shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(g.val(a)[i] * s);
  return g.add_node(std::move(out), g.wants_grad(a),
                    [a, s](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(a)) return;
                      const Tensor<T>& go = gr.grad(self);
                      Tensor<T>& ga = gr.grad_acc(a);
                      for (std::size_t i = 0; i < go.numel(); ++i)
                        ga[i] += static_cast<T>(go[i] * s);
                    });
}

// x[..., C] + b[C], broadcast over leading dims.
template <class T>
int bias_add(Graph<T>& g, int x, int b) {
  const Tensor<T>& xv = g.val(x);
  const Tensor<T>& bv = g.val(b);
  if (bv.rank() != 1 || xv.rank() < 1 || xv.dim(xv.rank() - 1) != bv.dim(0))
    throw ShapeError("bias_add: bias must match trailing dim");
  std::size_t c = bv.numel(), rows = xv.numel() / c;
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] + bv[j];
  return g.add_node(std::move(out), any_grad(g, {x, b}),
                    [x, b, rows, c](Graph<T>& gr, int self) {
                      const Tensor<T>& go = gr.grad(self);
                      if (gr.wants_grad(x)) {
                        Tensor<T>& gx = gr.grad_acc(x);
                        for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
                      }
                      if (gr.wants_grad(b)) {
                        Tensor<T>& gb = gr.grad_acc(b);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < c; ++j)
                            gb[j] += go[r * c + j];
                      }
                    });
}

// y = op(a) op(b) with op selected by the trans flags; rank-2 operands.
template <class T>
int matmul(Graph<T>& g, int a, int b, bool ta = false, bool tb = false) {
  const Tensor<T>& av = g.val(a);
  const Tensor<T>& bv = g.val(b);
  if (av.rank() != 2 || bv.rank() != 2) throw ShapeError("matmul: rank-2 only");
  int m = ta ? av.dim(1) : av.dim(0);
  int k = ta ? av.dim(0) : av.dim(1);
  int k2 = tb ? bv.dim(1) : bv.dim(0);
  int n = tb ? bv.dim(0) : bv.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dims differ " + shape_str(av.shape) + " vs " +
                     shape_str(bv.shape));
  Tensor<T> out({m, n});
  gemm(ta, tb, m, n, k, T(1), av.ptr(), av.dim(1), bv.ptr(), bv.dim(1), T(0),
       out.ptr(), n);
  return g.add_node(
      std::move(out), any_grad(g, {a, b}),
      [a, b, ta, tb, m, n, k](Graph<T>& gr, int self) {
        const Tensor<T>& go = gr.grad(self);
        const Tensor<T>& av2 = gr.val(a);
        const Tensor<T>& bv2 = gr.val(b);
        if (gr.wants_grad(a)) {
          Tensor<T>& ga = gr.grad_acc(a);
          if (!ta)  // da[m,k] = dC * op(b)^T
            gemm(false, !tb, m, k, n, T(1), go.ptr(), n, bv2.ptr(), bv2.dim(1),
                 T(1), ga.ptr(), ga.dim(1));
          else      // da[k,m] = op(b) * dC^T
            gemm(tb, true, k, m, n, T(1), bv2.ptr(), bv2.dim(1), go.ptr(), n,
                 T(1), ga.ptr(), ga.dim(1));
        }
        if (gr.wants_grad(b)) {
          Tensor<T>& gb = gr.grad_acc(b);
          if (!tb)  // db[k,n] = op(a)^T * dC
            gemm(!ta, false, k, n, m, T(1), av2.ptr(), av2.dim(1), go.ptr(), n,
                 T(1), gb.ptr(), gb.dim(1));
          else      // db[n,k] = dC^T * op(a)
            gemm(true, ta, n, k, m, T(1), go.ptr(), n, av2.ptr(), av2.dim(1),
                 T(1), gb.ptr(), gb.dim(1));
        }
      });
}

namespace detail {

// NHWC im2col: row (n, oy, ox), column (ky, kx, ci) with ci fastest, which
// matches a [KH*KW*Ci, Co] view of the row-major kernel tensor.
template <class T>
void im2col(const Tensor<T>& x, int kh, int kw, int sh, int sw, int ph, int pw,
            int oh, int ow, std::vector<T>& col) {
  int n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
  std::size_t kcols = static_cast<std::size_t>(kh) * kw * ci;
  col.assign(static_cast<std::size_t>(n) * oh * ow * kcols, T(0));
  const T* xp = x.ptr();
  std::size_t r = 0;
  for (int nn = 0; nn < n; ++nn)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++r) {
        T* dst = col.data() + r * kcols;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) {
            dst += static_cast<std::size_t>(kw) * ci;
            continue;
          }
          for (int kx = 0; kx < kw; ++kx, dst += ci) {
            int ix = ox * sw - pw + kx;
            if (ix < 0 || ix >= w) continue;
            const T* src = xp + ((static_cast<std::size_t>(nn) * h + iy) * w + ix) * ci;
            std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(ci));
          }
        }
      }
}

template <class T>
void col2im_acc(const std::vector<T>& col, int n, int h, int w, int ci, int kh,
                int kw, int sh, int sw, int ph, int pw, int oh, int ow, T* gx) {
  std::size_t kcols = static_cast<std::size_t>(kh) * kw * ci;
  std::size_t r = 0;
  for (int nn = 0; nn < n; ++nn)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++r) {
        const T* src = col.data() + r * kcols;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) {
            src += static_cast<std::size_t>(kw) * ci;
            continue;
          }
          for (int kx = 0; kx < kw; ++kx, src += ci) {
            int ix = ox * sw - pw + kx;
            if (ix < 0 || ix >= w) continue;
            T* dst = gx + ((static_cast<std::size_t>(nn) * h + iy) * w + ix) * ci;
            for (int c = 0; c < ci; ++c) dst[c] += src[c];
          }
        }
      }
}

}  // namespace detail

// x: [N,H,W,Ci], w: [KH,KW,Ci,Co]. Backward re-runs im2col instead of caching
// the column matrix; that trades one extra pass for a much smaller tape.
template <class T>
int conv2d(Graph<T>& g, int x, int w, int sh = 1, int sw = 1, int ph = -1,
           int pw = -1) {
  const Tensor<T>& xv = g.val(x);
  const Tensor<T>& wv = g.val(w);
  if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv2d: rank-4 only");
  if (xv.dim(3) != wv.dim(2))
    throw ShapeError("conv2d: channel mismatch " + shape_str(xv.shape) + " vs " +
                     shape_str(wv.shape));
  int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
  if (ph < 0) ph = kh / 2;
  if (pw < 0) pw = kw / 2;
  int n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), ci = xv.dim(3);
  int oh = (h + 2 * ph - kh) / sh + 1;
  int ow = (wd + 2 * pw - kw) / sw + 1;
  if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel exceeds padded input");

  int rows = n * oh * ow, kcols = kh * kw * ci;
  std::vector<T> col;
  detail::im2col(xv, kh, kw, sh, sw, ph, pw, oh, ow, col);
  Tensor<T> out({n, oh, ow, co});
  gemm(false, false, rows, co, kcols, T(1), col.data(), kcols, wv.ptr(), co, T(0),
       out.ptr(), co);

  return g.add_node(
      std::move(out), any_grad(g, {x, w}),
      [x, w, kh, kw, sh, sw, ph, pw, oh, ow, rows, kcols, co](Graph<T>& gr,
                                                              int self) {
        const Tensor<T>& go = gr.grad(self);
        const Tensor<T>& xv2 = gr.val(x);
        const Tensor<T>& wv2 = gr.val(w);
        if (gr.wants_grad(w)) {
          std::vector<T> col;
          detail::im2col(xv2, kh, kw, sh, sw, ph, pw, oh, ow, col);
          Tensor<T>& gw = gr.grad_acc(w);
          gemm(true, false, kcols, co, rows, T(1), col.data(), kcols, go.ptr(),
               co, T(1), gw.ptr(), co);
        }
        if (gr.wants_grad(x)) {
          std::vector<T> dcol(static_cast<std::size_t>(rows) * kcols);
          gemm(false, true, rows, kcols, co, T(1), go.ptr(), co, wv2.ptr(), co,
               T(0), dcol.data(), kcols);
          Tensor<T>& gx = gr.grad_acc(x);
          detail::col2im_acc(dcol, xv2.dim(0), xv2.dim(1), xv2.dim(2), xv2.dim(3),
                             kh, kw, sh, sw, ph, pw, oh, ow, gx.ptr());
        }
      });
}

// Half-pixel-center bilinear resize over [N,H,W,C]; matches resize_bilinear in
// video.hpp. An exact 2x reduction degenerates to 2x2 area averaging.
template <class T>
int resize_bilinear_nhwc(Graph<T>& g, int x, int oh, int ow) {
  const Tensor<T>& xv = g.val(x);
  if (xv.rank() != 4) throw ShapeError("resize: rank-4 only");
  int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  if (oh < 1 || ow < 1) throw ShapeError("resize: target dims must be >= 1");

  auto taps = [](int in, int out) {
    std::vector<std::pair<int, int>> lohi(static_cast<std::size_t>(out));
    std::vector<double> frac(static_cast<std::size_t>(out));
    double s = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * s - 0.5;
      src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
      int lo = static_cast<int>(std::floor(src));
      lohi[o] = {lo, std::min(lo + 1, in - 1)};
      frac[o] = src - lo;
    }
    return std::pair(lohi, frac);
  };
  auto [ys, fy] = taps(h, oh);
  auto [xs, fx] = taps(w, ow);

  Tensor<T> out({n, oh, ow, c});
  for (int nn = 0; nn < n; ++nn)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          auto at = [&](int yy, int xx) {
            return static_cast<double>(
                xv[((static_cast<std::size_t>(nn) * h + yy) * w + xx) * c + ch]);
          };
          double top = at(ys[oy].first, xs[ox].first) * (1 - fx[ox]) +
                       at(ys[oy].first, xs[ox].second) * fx[ox];
          double bot = at(ys[oy].second, xs[ox].first) * (1 - fx[ox]) +
                       at(ys[oy].second, xs[ox].second) * fx[ox];
          out[((static_cast<std::size_t>(nn) * oh + oy) * ow + ox) * c + ch] =
              static_cast<T>(top + (bot - top) * fy[oy]);
        }

  return g.add_node(
      std::move(out), g.wants_grad(x),
      [x, n, h, w, c, oh, ow, ys = ys, fy = fy, xs = xs, fx = fx](Graph<T>& gr,
                                                                 int self) {
        if (!gr.wants_grad(x)) return;
        const Tensor<T>& go = gr.grad(self);
        Tensor<T>& gx = gr.grad_acc(x);
        for (int nn = 0; nn < n; ++nn)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
              for (int ch = 0; ch < c; ++ch) {
                double gv = static_cast<double>(
                    go[((static_cast<std::size_t>(nn) * oh + oy) * ow + ox) * c + ch]);
                auto acc = [&](int yy, int xx, double wgt) {
                  gx[((static_cast<std::size_t>(nn) * h + yy) * w + xx) * c + ch] +=
                      static_cast<T>(gv * wgt);
                };
                double wy0 = 1 - fy[oy], wy1 = fy[oy];
                double wx0 = 1 - fx[ox], wx1 = fx[ox];
                acc(ys[oy].first, xs[ox].first, wy0 * wx0);
                acc(ys[oy].first, xs[ox].second, wy0 * wx1);
                acc(ys[oy].second, xs[ox].first, wy1 * wx0);
                acc(ys[oy].second, xs[ox].second, wy1 * wx1);
              }
      });
}

template <class T>
int sigmoid(Graph<T>& g, int x) {
  Tensor<T> out(g.val(x).shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(g.val(x)[i]))));
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& y = gr.val(self);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i)
                        gx[i] += go[i] * y[i] * (T(1) - y[i]);
                    });
}

template <class T>
int silu(Graph<T>& g, int x) {
  Tensor<T> out(g.val(x).shape);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double v = static_cast<double>(g.val(x)[i]);
    out[i] = static_cast<T>(v / (1.0 + std::exp(-v)));
  }
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& xv = gr.val(x);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i) {
                        double v = static_cast<double>(xv[i]);
                        double s = 1.0 / (1.0 + std::exp(-v));
                        gx[i] += static_cast<T>(static_cast<double>(go[i]) * s *
                                                (1.0 + v * (1.0 - s)));
                      }
                    });
}

template <class T>
int relu(Graph<T>& g, int x) {
  Tensor<T> out(g.val(x).shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = g.val(x)[i] > T(0) ? g.val(x)[i] : T(0);
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& xv = gr.val(x);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i)
                        if (xv[i] > T(0)) gx[i] += go[i];
                    });
}

template <class T>
int abs_(Graph<T>& g, int x) {
  Tensor<T> out(g.val(x).shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = g.val(x)[i] < T(0) ? -g.val(x)[i] : g.val(x)[i];
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& xv = gr.val(x);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i) {
                        if (xv[i] > T(0)) gx[i] += go[i];
                        else if (xv[i] < T(0)) gx[i] -= go[i];
                      }
                    });
}

// Subgradient is identity strictly inside (0,1), zero elsewhere.
template <class T>
int clamp01(Graph<T>& g, int x) {
  Tensor<T> out(g.val(x).shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = std::min(std::max(g.val(x)[i], T(0)), T(1));
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& xv = gr.val(x);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i)
                        if (xv[i] > T(0) && xv[i] < T(1)) gx[i] += go[i];
                    });
}

// Row-wise stable softmax over the last dim of a rank-2 tensor.
template <class T>
int softmax_rows(Graph<T>& g, int x) {
  const Tensor<T>& xv = g.val(x);
  if (xv.rank() != 2) throw ShapeError("softmax: rank-2 only");
  int m = xv.dim(0), n = xv.dim(1);
  Tensor<T> out(xv.shape);
  for (int r = 0; r < m; ++r) {
    const T* row = xv.ptr() + static_cast<std::size_t>(r) * n;
    T* orow = out.ptr() + static_cast<std::size_t>(r) * n;
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(static_cast<double>(row[j]) - mx);
      orow[j] = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < n; ++j) orow[j] = static_cast<T>(orow[j] / sum);
  }
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x, m, n](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      const Tensor<T>& y = gr.val(self);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (int r = 0; r < m; ++r) {
                        std::size_t off = static_cast<std::size_t>(r) * n;
                        double dot = 0.0;
                        for (int j = 0; j < n; ++j)
                          dot += static_cast<double>(go[off + j]) * y[off + j];
                        for (int j = 0; j < n; ++j)
                          gx[off + j] += static_cast<T>(
                              y[off + j] * (static_cast<double>(go[off + j]) - dot));
                      }
                    });
}

// Unit-L2 normalization over the trailing dim: y = x / sqrt(sum x^2 + eps).
template <class T>
int normalize_channels(Graph<T>& g, int x, double eps = 1e-10) {
  const Tensor<T>& xv = g.val(x);
  if (xv.rank() < 1) throw ShapeError("normalize: need at least rank 1");
  std::size_t c = static_cast<std::size_t>(xv.dim(xv.rank() - 1));
  std::size_t rows = xv.numel() / c;
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = eps;
    for (std::size_t j = 0; j < c; ++j) {
      double v = static_cast<double>(xv[r * c + j]);
      s += v * v;
    }
    double inv = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < c; ++j)
      out[r * c + j] = static_cast<T>(xv[r * c + j] * inv);
  }
  return g.add_node(
      std::move(out), g.wants_grad(x),
      [x, rows, c, eps](Graph<T>& gr, int self) {
        if (!gr.wants_grad(x)) return;
        const Tensor<T>& go = gr.grad(self);
        const Tensor<T>& xv2 = gr.val(x);
        Tensor<T>& gx = gr.grad_acc(x);
        for (std::size_t r = 0; r < rows; ++r) {
          double s = eps, dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            double v = static_cast<double>(xv2[r * c + j]);
            s += v * v;
            dot += static_cast<double>(go[r * c + j]) * v;
          }
          double inv = 1.0 / std::sqrt(s), inv3 = inv * inv * inv;
          for (std::size_t j = 0; j < c; ++j)
            gx[r * c + j] += static_cast<T>(
                static_cast<double>(go[r * c + j]) * inv -
                static_cast<double>(xv2[r * c + j]) * dot * inv3);
        }
      });
}

template <class T>
int mean_all(Graph<T>& g, int x) {
  const Tensor<T>& xv = g.val(x);
  std::size_t n = xv.numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(xv[i]);
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x, n](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      T gv = static_cast<T>(gr.grad(self)[0] /
                                            static_cast<double>(n));
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < n; ++i) gx[i] += gv;
                    });
}

template <class T>
int concat(Graph<T>& g, const std::vector<int>& ids, int axis) {
  if (ids.empty()) throw ShapeError("concat: empty input list");
  std::vector<int> shape = g.val(ids[0]).shape;
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ShapeError("concat: bad axis");
  int total = 0;
  for (int id : ids) {
    const auto& s = g.val(id).shape;
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis && s[d] != shape[d])
        throw ShapeError("concat: shapes differ off-axis");
    total += s[static_cast<std::size_t>(axis)];
  }
  std::vector<int> oshape = shape;
  oshape[static_cast<std::size_t>(axis)] = total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(shape[d]);
  for (std::size_t d = axis + 1; d < shape.size(); ++d)
    inner *= static_cast<std::size_t>(shape[d]);

  Tensor<T> out(oshape);
  std::size_t row_out = static_cast<std::size_t>(total) * inner;
  std::size_t off = 0;
  for (int id : ids) {
    std::size_t ax = static_cast<std::size_t>(g.val(id).dim(axis)) * inner;
    const T* src = g.val(id).ptr();
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(out.ptr() + o * row_out + off, src + o * ax, sizeof(T) * ax);
    off += ax;
  }

  bool rg = false;
  for (int id : ids) rg = rg || g.wants_grad(id);
  std::vector<int> ids_copy = ids;
  return g.add_node(
      std::move(out), rg,
      [ids = std::move(ids_copy), axis, outer, inner, row_out](Graph<T>& gr,
                                                               int self) {
        const Tensor<T>& go = gr.grad(self);
        std::size_t off = 0;
        for (int id : ids) {
          std::size_t ax = static_cast<std::size_t>(gr.val(id).dim(axis)) * inner;
          if (gr.wants_grad(id)) {
            Tensor<T>& gp = gr.grad_acc(id);
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = go.ptr() + o * row_out + off;
              T* dst = gp.ptr() + o * ax;
              for (std::size_t i = 0; i < ax; ++i) dst[i] += src[i];
            }
          }
          off += ax;
        }
      });
}

template <class T>
int slice(Graph<T>& g, int x, int axis, int start, int len) {
  const Tensor<T>& xv = g.val(x);
  if (axis < 0 || axis >= xv.rank()) throw ShapeError("slice: bad axis");
  int dim = xv.dim(axis);
  if (start < 0 || len < 1 || start + len > dim)
    throw ShapeError("slice: range out of bounds");
  std::vector<int> oshape = xv.shape;
  oshape[static_cast<std::size_t>(axis)] = len;
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(xv.dim(d));
  for (int d = axis + 1; d < xv.rank(); ++d)
    inner *= static_cast<std::size_t>(xv.dim(d));

  Tensor<T> out(oshape);
  std::size_t row_in = static_cast<std::size_t>(dim) * inner;
  std::size_t row_out = static_cast<std::size_t>(len) * inner;
  std::size_t skip = static_cast<std::size_t>(start) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(out.ptr() + o * row_out, xv.ptr() + o * row_in + skip,
                sizeof(T) * row_out);

  return g.add_node(std::move(out), g.wants_grad(x),
                    [x, outer, row_in, row_out, skip](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t o = 0; o < outer; ++o) {
                        const T* src = go.ptr() + o * row_out;
                        T* dst = gx.ptr() + o * row_in + skip;
                        for (std::size_t i = 0; i < row_out; ++i) dst[i] += src[i];
                      }
                    });
}

template <class T>
int reshape(Graph<T>& g, int x, std::vector<int> shape) {
  Tensor<T> out(shape);
  if (out.numel() != g.val(x).numel())
    throw ShapeError("reshape: element count mismatch");
  out.data = g.val(x).data;
  out.shape = std::move(shape);
  return g.add_node(std::move(out), g.wants_grad(x),
                    [x](Graph<T>& gr, int self) {
                      if (!gr.wants_grad(x)) return;
                      const Tensor<T>& go = gr.grad(self);
                      Tensor<T>& gx = gr.grad_acc(x);
                      for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
                    });
}

// Bidirectional warped-difference penalty over a [T,H,W,C] tensor with fixed
// flows: mean of rho(warp(x[i+1], fwd[i]) - x[i]) and the bwd mirror over
// every element of every pair, rho(d) = sqrt(d^2 + delta^2) - delta. The
// Charbonnier form is |d| away from zero but smooth through it, so the term
// never leaves gradient checks sitting on a kink; exact zeros contribute
// exactly zero. Fused: backward scatters through the bilinear taps directly.
inline constexpr double kConsisDelta = 1e-3;

template <class T>
int temporal_consistency(Graph<T>& g, int x,
                         std::shared_ptr<const std::vector<FlowField<T>>> fwd,
                         std::shared_ptr<const std::vector<FlowField<T>>> bwd) {
  const Tensor<T>& xv = g.val(x);
  if (xv.rank() != 4) throw ShapeError("consistency: rank-4 [T,H,W,C] only");
  int t = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  if (t < 2) throw ShapeError("consistency: need at least 2 frames");
  if (static_cast<int>(fwd->size()) != t - 1 ||
      static_cast<int>(bwd->size()) != t - 1)
    throw ShapeError("consistency: need T-1 flows per direction");
  for (const auto& fl : *fwd)
    if (fl.h != h || fl.w != w) throw ShapeError("consistency: flow shape");
  for (const auto& fl : *bwd)
    if (fl.h != h || fl.w != w) throw ShapeError("consistency: flow shape");

  std::size_t frame = static_cast<std::size_t>(h) * w * c;
  auto tap = [&](const FlowField<T>& fl, int y, int xx, int& x0, int& x1, int& y0,
                 int& y1, double& fx, double& fy) {
    double sx = std::clamp(xx + static_cast<double>(fl.dx(y, xx)), 0.0,
                           static_cast<double>(w - 1));
    double sy = std::clamp(y + static_cast<double>(fl.dy(y, xx)), 0.0,
                           static_cast<double>(h - 1));
    x0 = static_cast<int>(std::floor(sx));
    y0 = static_cast<int>(std::floor(sy));
    x1 = std::min(x0 + 1, w - 1);
    y1 = std::min(y0 + 1, h - 1);
    fx = sx - x0;
    fy = sy - y0;
  };

  double acc = 0.0;
  const T* xp = xv.ptr();
  for (int i = 0; i + 1 < t; ++i) {
    // pair term (src warped onto ref's grid, compared against ref)
    for (int dir = 0; dir < 2; ++dir) {
      const FlowField<T>& fl = dir == 0 ? (*fwd)[i] : (*bwd)[i];
      const T* src = xp + frame * static_cast<std::size_t>(dir == 0 ? i + 1 : i);
      const T* ref = xp + frame * static_cast<std::size_t>(dir == 0 ? i : i + 1);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          int x0, x1, y0, y1;
          double fx, fy;
          tap(fl, y, xx, x0, x1, y0, y1, fx, fy);
          for (int ch = 0; ch < c; ++ch) {
            auto at = [&](int yy, int xc) {
              return static_cast<double>(
                  src[(static_cast<std::size_t>(yy) * w + xc) * c + ch]);
            };
            double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
            double bot = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
            double warped = top + (bot - top) * fy;
            double diff =
                warped - static_cast<double>(
                             ref[(static_cast<std::size_t>(y) * w + xx) * c + ch]);
            if (diff != 0.0)
              acc += std::sqrt(diff * diff + kConsisDelta * kConsisDelta) -
                     kConsisDelta;
          }
        }
    }
  }
  std::size_t count = static_cast<std::size_t>(2 * (t - 1)) * frame;
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / static_cast<double>(count));

  return g.add_node(
      std::move(out), g.wants_grad(x),
      [x, fwd, bwd, t, h, w, c, frame, count](Graph<T>& gr, int self) {
        if (!gr.wants_grad(x)) return;
        double gscale = static_cast<double>(gr.grad(self)[0]) /
                        static_cast<double>(count);
        const Tensor<T>& xv2 = gr.val(x);
        Tensor<T>& gx = gr.grad_acc(x);
        const T* xp = xv2.ptr();
        for (int i = 0; i + 1 < t; ++i)
          for (int dir = 0; dir < 2; ++dir) {
            const FlowField<T>& fl = dir == 0 ? (*fwd)[i] : (*bwd)[i];
            std::size_t si = frame * static_cast<std::size_t>(dir == 0 ? i + 1 : i);
            std::size_t ri = frame * static_cast<std::size_t>(dir == 0 ? i : i + 1);
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) {
                double sx = std::clamp(xx + static_cast<double>(fl.dx(y, xx)), 0.0,
                                       static_cast<double>(w - 1));
                double sy = std::clamp(y + static_cast<double>(fl.dy(y, xx)), 0.0,
                                       static_cast<double>(h - 1));
                int x0 = static_cast<int>(std::floor(sx));
                int y0 = static_cast<int>(std::floor(sy));
                int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                double fx = sx - x0, fy = sy - y0;
                for (int ch = 0; ch < c; ++ch) {
                  auto sidx = [&](int yy, int xc) {
                    return si + (static_cast<std::size_t>(yy) * w + xc) * c + ch;
                  };
                  double top = xp[sidx(y0, x0)] * (1 - fx) + xp[sidx(y0, x1)] * fx;
                  double bot = xp[sidx(y1, x0)] * (1 - fx) + xp[sidx(y1, x1)] * fx;
                  double warped = top + (bot - top) * fy;
                  std::size_t refi =
                      ri + (static_cast<std::size_t>(y) * w + xx) * c + ch;
                  double diff = warped - static_cast<double>(xp[refi]);
                  if (diff == 0.0) continue;
                  double s = gscale * diff /
                             std::sqrt(diff * diff + kConsisDelta * kConsisDelta);
                  gx[sidx(y0, x0)] += static_cast<T>(s * (1 - fy) * (1 - fx));
                  gx[sidx(y0, x1)] += static_cast<T>(s * (1 - fy) * fx);
                  gx[sidx(y1, x0)] += static_cast<T>(s * fy * (1 - fx));
                  gx[sidx(y1, x1)] += static_cast<T>(s * fy * fx);
                  gx[refi] -= static_cast<T>(s);
                }
              }
          }
      });
}

// Composite conveniences.

template <class T>
int mse(Graph<T>& g, int a, int b) {
  int d = sub(g, a, b);
  return mean_all(g, mul(g, d, d));
}

template <class T>
int l1(Graph<T>& g, int a, int b) {
  return mean_all(g, abs_(g, sub(g, a, b)));
}

template <class T>
int dense(Graph<T>& g, int x, int w, int b = -1) {
  int y = matmul(g, x, w);
  return b >= 0 ? bias_add(g, y, b) : y;
}

}  // namespace ops

}  // namespace stvsr
