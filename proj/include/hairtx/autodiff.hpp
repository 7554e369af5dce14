#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hairtx/errors.hpp"
#include "hairtx/tensor.hpp"

namespace hairtx::ad {

// Define-by-run reverse-mode autodiff over Tensor. Graphs are built fresh per
// evaluation; backward() works for scalar outputs. Binary elementwise ops
// broadcast when one operand is a scalar (numel == 1).

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor&)> backprop;  // accumulates into parents' grad
  bool requires_grad = false;
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& value() const { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  NodePtr node() const { return n_; }

  double scalar() const { return n_->value.data.at(0); }

  /// Reverse pass from a scalar output. Zeroes grads of the reachable
  /// requires_grad subgraph, then accumulates.
  void backward() const {
    if (n_->value.numel() != 1) throw ShapeError("backward: output must be scalar");
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    if (n_->requires_grad) stack.emplace_back(n_.get(), 0);
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx == 0 && seen.count(node)) {
        stack.pop_back();
        continue;
      }
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) stack.emplace_back(p, 0);
      } else {
        seen.insert(node);
        topo.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* node : topo) node->grad = Tensor::zeros(node->value.shape);
    if (!n_->requires_grad) return;
    n_->grad.data[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
      if ((*it)->backprop) (*it)->backprop((*it)->grad);
  }

 private:
  NodePtr n_;
};

namespace detail {

inline NodePtr make(Tensor value, std::initializer_list<Var> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& p : parents) {
    n->parents.push_back(p.node());
    n->requires_grad = n->requires_grad || p.node()->requires_grad;
  }
  return n;
}

inline void accum(const NodePtr& p, const Tensor& g) {
  for (int i = 0; i < g.numel(); ++i) p->grad.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
}

enum class BinKind { Add, Sub, Mul, Div };

inline Var binary(const Var& a, const Var& b, BinKind kind) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_scalar = av.numel() == 1;
  const bool b_scalar = bv.numel() == 1;
  if (!a_scalar && !b_scalar && !av.same_shape(bv))
    throw ShapeError("binary op: incompatible shapes " + shape_str(av.shape) + " vs " +
                     shape_str(bv.shape));
  const Tensor& big = a_scalar ? bv : av;
  Tensor out(big.shape);
  const int n = out.numel();
  for (int i = 0; i < n; ++i) {
    const double x = av.data[a_scalar ? 0 : static_cast<size_t>(i)];
    const double y = bv.data[b_scalar ? 0 : static_cast<size_t>(i)];
    switch (kind) {
      case BinKind::Add: out.data[static_cast<size_t>(i)] = x + y; break;
      case BinKind::Sub: out.data[static_cast<size_t>(i)] = x - y; break;
      case BinKind::Mul: out.data[static_cast<size_t>(i)] = x * y; break;
      case BinKind::Div: out.data[static_cast<size_t>(i)] = x / y; break;
    }
  }
  auto node = make(std::move(out), {a, b});
  NodePtr pa = a.node(), pb = b.node();
  node->backprop = [pa, pb, a_scalar, b_scalar, kind](const Tensor& g) {
    const Tensor& av = pa->value;
    const Tensor& bv = pb->value;
    const int n = g.numel();
    if (pa->requires_grad) {
      for (int i = 0; i < n; ++i) {
        const double gi = g.data[static_cast<size_t>(i)];
        const double y = bv.data[b_scalar ? 0 : static_cast<size_t>(i)];
        double d = 0.0;
        switch (kind) {
          case BinKind::Add: d = gi; break;
          case BinKind::Sub: d = gi; break;
          case BinKind::Mul: d = gi * y; break;
          case BinKind::Div: d = gi / y; break;
        }
        pa->grad.data[a_scalar ? 0 : static_cast<size_t>(i)] += d;
      }
    }
    if (pb->requires_grad) {
      for (int i = 0; i < n; ++i) {
        const double gi = g.data[static_cast<size_t>(i)];
        const double x = av.data[a_scalar ? 0 : static_cast<size_t>(i)];
        const double y = bv.data[b_scalar ? 0 : static_cast<size_t>(i)];
        double d = 0.0;
        switch (kind) {
          case BinKind::Add: d = gi; break;
          case BinKind::Sub: d = -gi; break;
          case BinKind::Mul: d = gi * x; break;
          case BinKind::Div: d = -gi * x / (y * y); break;
        }
        pb->grad.data[b_scalar ? 0 : static_cast<size_t>(i)] += d;
      }
    }
  };
  return Var(node);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinKind::Add); }
inline Var sub(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinKind::Sub); }
inline Var mul(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinKind::Mul); }
inline Var div(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinKind::Div); }

inline Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.data) v *= c;
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int i = 0; i < g.numel(); ++i) pa->grad.data[static_cast<size_t>(i)] += c * g.data[static_cast<size_t>(i)];
  };
  return Var(node);
}

inline Var add_const(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.data) v += c;
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa](const Tensor& g) {
    if (pa->requires_grad) detail::accum(pa, g);
  };
  return Var(node);
}

/// Elementwise product with a constant tensor of the same shape.
inline Var mul_const(const Var& a, const Tensor& m) {
  require_same_shape(a.value(), m, "mul_const");
  Tensor out = a.value();
  for (int i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= m.data[static_cast<size_t>(i)];
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  Tensor mc = m;
  node->backprop = [pa, mc](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int i = 0; i < g.numel(); ++i)
      pa->grad.data[static_cast<size_t>(i)] += mc.data[static_cast<size_t>(i)] * g.data[static_cast<size_t>(i)];
  };
  return Var(node);
}

/// [C,H,W] times a constant [H,W] map broadcast over channels.
inline Var mul_bcast_hw(const Var& a, const Tensor& m) {
  const Tensor& av = a.value();
  if (av.rank() != 3 || m.rank() != 2 || av.dim(1) != m.dim(0) || av.dim(2) != m.dim(1))
    throw ShapeError("mul_bcast_hw: need [C,H,W] x [H,W]");
  const int c = av.dim(0), hw = m.numel();
  Tensor out = av;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < hw; ++i) out.data[static_cast<size_t>(ch) * hw + i] *= m.data[static_cast<size_t>(i)];
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  Tensor mc = m;
  node->backprop = [pa, mc, c, hw](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < hw; ++i)
        pa->grad.data[static_cast<size_t>(ch) * hw + i] +=
            mc.data[static_cast<size_t>(i)] * g.data[static_cast<size_t>(ch) * hw + i];
  };
  return Var(node);
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  auto node = detail::make(Tensor::scalar(s), {a});
  NodePtr pa = a.node();
  node->backprop = [pa](const Tensor& g) {
    if (!pa->requires_grad) return;
    const double gs = g.data[0];
    for (double& d : pa->grad.data) d += gs;
  };
  return Var(node);
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / a.value().numel()); }

/// Per-channel spatial sum: [C,H,W] -> [C].
inline Var sum_hw(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 3) throw ShapeError("sum_hw: need [C,H,W]");
  const int c = av.dim(0), hw = av.dim(1) * av.dim(2);
  Tensor out({c});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += av.data[static_cast<size_t>(ch) * hw + i];
    out.data[static_cast<size_t>(ch)] = s;
  }
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c, hw](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int ch = 0; ch < c; ++ch) {
      const double gs = g.data[static_cast<size_t>(ch)];
      for (int i = 0; i < hw; ++i) pa->grad.data[static_cast<size_t>(ch) * hw + i] += gs;
    }
  };
  return Var(node);
}

inline Var sqrt(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::sqrt(v);
  auto node = detail::make(out, {a});
  NodePtr pa = a.node();
  Tensor ov = out;
  node->backprop = [pa, ov](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int i = 0; i < g.numel(); ++i)
      pa->grad.data[static_cast<size_t>(i)] += 0.5 / ov.data[static_cast<size_t>(i)] * g.data[static_cast<size_t>(i)];
  };
  return Var(node);
}

/// Elementwise max with a constant (subgradient: pass-through where a > c).
inline Var max_const(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::max(v, c);
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int i = 0; i < g.numel(); ++i)
      if (pa->value.data[static_cast<size_t>(i)] > c)
        pa->grad.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
  };
  return Var(node);
}

/// Unit-normalize each per-position channel vector: y_c = x_c / sqrt(sum_c x_c^2 + eps).
inline Var normalize_channels(const Var& a, double eps = 1e-10) {
  const Tensor& av = a.value();
  if (av.rank() != 3) throw ShapeError("normalize_channels: need [C,H,W]");
  const int c = av.dim(0), hw = av.dim(1) * av.dim(2);
  Tensor out(av.shape);
  Tensor inv({av.dim(1), av.dim(2)});
  for (int i = 0; i < hw; ++i) {
    double s = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double x = av.data[static_cast<size_t>(ch) * hw + i];
      s += x * x;
    }
    const double r = 1.0 / std::sqrt(s + eps);
    inv.data[static_cast<size_t>(i)] = r;
    for (int ch = 0; ch < c; ++ch)
      out.data[static_cast<size_t>(ch) * hw + i] = av.data[static_cast<size_t>(ch) * hw + i] * r;
  }
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  Tensor invc = inv;
  node->backprop = [pa, invc, c, hw](const Tensor& g) {
    if (!pa->requires_grad) return;
    // dx_c = r*g_c - r^3 * x_c * sum_k g_k x_k
    for (int i = 0; i < hw; ++i) {
      const double r = invc.data[static_cast<size_t>(i)];
      double gx = 0.0;
      for (int ch = 0; ch < c; ++ch)
        gx += g.data[static_cast<size_t>(ch) * hw + i] * pa->value.data[static_cast<size_t>(ch) * hw + i];
      const double r3gx = r * r * r * gx;
      for (int ch = 0; ch < c; ++ch)
        pa->grad.data[static_cast<size_t>(ch) * hw + i] +=
            r * g.data[static_cast<size_t>(ch) * hw + i] -
            r3gx * pa->value.data[static_cast<size_t>(ch) * hw + i];
    }
  };
  return Var(node);
}

/// 1x1 channel mixing by a constant matrix: [Cin,H,W] x M[Cout,Cin] -> [Cout,H,W].
inline Var channel_mix(const Var& a, const Tensor& m) {
  const Tensor& av = a.value();
  if (av.rank() != 3 || m.rank() != 2 || m.dim(1) != av.dim(0))
    throw ShapeError("channel_mix: need [Cin,H,W] and [Cout,Cin]");
  const int cin = av.dim(0), cout = m.dim(0), hw = av.dim(1) * av.dim(2);
  Tensor out({cout, av.dim(1), av.dim(2)});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci) {
      const double w = m.at(co, ci);
      for (int i = 0; i < hw; ++i)
        out.data[static_cast<size_t>(co) * hw + i] += w * av.data[static_cast<size_t>(ci) * hw + i];
    }
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  Tensor mc = m;
  node->backprop = [pa, mc, cin, cout, hw](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int co = 0; co < cout; ++co)
      for (int ci = 0; ci < cin; ++ci) {
        const double w = mc.at(co, ci);
        for (int i = 0; i < hw; ++i)
          pa->grad.data[static_cast<size_t>(ci) * hw + i] += w * g.data[static_cast<size_t>(co) * hw + i];
      }
  };
  return Var(node);
}

/// Constant matrix times variable vector: M[R,C] x x[C] -> [R].
inline Var matvec(const Tensor& m, const Var& x) {
  const Tensor& xv = x.value();
  if (m.rank() != 2 || xv.rank() != 1 || m.dim(1) != xv.dim(0))
    throw ShapeError("matvec: need M[R,C] and x[C]");
  const int r = m.dim(0), c = m.dim(1);
  Tensor out({r});
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += m.at(i, j) * xv.data[static_cast<size_t>(j)];
    out.data[static_cast<size_t>(i)] = s;
  }
  auto node = detail::make(std::move(out), {x});
  NodePtr px = x.node();
  Tensor mc = m;
  node->backprop = [px, mc, r, c](const Tensor& g) {
    if (!px->requires_grad) return;
    for (int i = 0; i < r; ++i) {
      const double gi = g.data[static_cast<size_t>(i)];
      for (int j = 0; j < c; ++j) px->grad.data[static_cast<size_t>(j)] += mc.at(i, j) * gi;
    }
  };
  return Var(node);
}

inline Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != a.value().numel()) throw ShapeError("reshape: numel mismatch");
  Tensor out = a.value();
  out.shape = std::move(shape);
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa](const Tensor& g) {
    if (pa->requires_grad) detail::accum(pa, g);
  };
  return Var(node);
}

/// 2x2 mean pooling on the trailing two dims of [H,W] or [C,H,W].
inline Var avg_pool2(const Var& a) {
  const Tensor& av = a.value();
  const bool chw = av.rank() == 3;
  if (!chw && av.rank() != 2) throw ShapeError("avg_pool2: need [H,W] or [C,H,W]");
  const int c = chw ? av.dim(0) : 1;
  const int h = av.dim(chw ? 1 : 0), w = av.dim(chw ? 2 : 1);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd spatial dims");
  const int oh = h / 2, ow = w / 2;
  Tensor out(chw ? std::vector<int>{c, oh, ow} : std::vector<int>{oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const size_t base = (static_cast<size_t>(ch) * h + 2 * y) * w + 2 * x;
        out.data[(static_cast<size_t>(ch) * oh + y) * ow + x] =
            0.25 * (av.data[base] + av.data[base + 1] + av.data[base + w] + av.data[base + w + 1]);
      }
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c, h, w, oh, ow](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const double gv = 0.25 * g.data[(static_cast<size_t>(ch) * oh + y) * ow + x];
          const size_t base = (static_cast<size_t>(ch) * h + 2 * y) * w + 2 * x;
          pa->grad.data[base] += gv;
          pa->grad.data[base + 1] += gv;
          pa->grad.data[base + w] += gv;
          pa->grad.data[base + w + 1] += gv;
        }
  };
  return Var(node);
}

/// Nearest-neighbor upsampling by an integer factor on [H,W] or [C,H,W].
inline Var upsample_nearest(const Var& a, int factor) {
  const Tensor& av = a.value();
  const bool chw = av.rank() == 3;
  if (!chw && av.rank() != 2) throw ShapeError("upsample_nearest: need [H,W] or [C,H,W]");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const int c = chw ? av.dim(0) : 1;
  const int h = av.dim(chw ? 1 : 0), w = av.dim(chw ? 2 : 1);
  const int oh = h * factor, ow = w * factor;
  Tensor out(chw ? std::vector<int>{c, oh, ow} : std::vector<int>{oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out.data[(static_cast<size_t>(ch) * oh + y) * ow + x] =
            av.data[(static_cast<size_t>(ch) * h + y / factor) * w + x / factor];
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c, h, w, factor](const Tensor& g) {
    if (!pa->requires_grad) return;
    const int oh = h * factor, ow = w * factor;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          pa->grad.data[(static_cast<size_t>(ch) * h + y / factor) * w + x / factor] +=
              g.data[(static_cast<size_t>(ch) * oh + y) * ow + x];
  };
  return Var(node);
}

/// View of a contiguous range of a flat [N] vector, reshaped.
inline Var slice(const Var& a, int offset, std::vector<int> shape) {
  const Tensor& av = a.value();
  if (av.rank() != 1) throw ShapeError("slice: need flat [N]");
  const int count = Tensor::numel_of(shape);
  if (offset < 0 || offset + count > av.numel()) throw ShapeError("slice: out of range");
  Tensor out(std::move(shape));
  std::copy(av.data.begin() + offset, av.data.begin() + offset + count, out.data.begin());
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, offset, count](const Tensor& g) {
    if (!pa->requires_grad) return;
    for (int i = 0; i < count; ++i) pa->grad.data[static_cast<size_t>(offset + i)] += g.data[static_cast<size_t>(i)];
  };
  return Var(node);
}

/// Gram matrix of [C,H,W] features: G = gamma^T gamma with gamma in R^{HW x C}.
inline Var gram(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 3) throw ShapeError("gram: need [C,H,W]");
  const int c = av.dim(0), hw = av.dim(1) * av.dim(2);
  Tensor out({c, c});
  for (int i = 0; i < c; ++i)
    for (int j = i; j < c; ++j) {
      double s = 0.0;
      for (int p = 0; p < hw; ++p)
        s += av.data[static_cast<size_t>(i) * hw + p] * av.data[static_cast<size_t>(j) * hw + p];
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, c, hw](const Tensor& g) {
    if (!pa->requires_grad) return;
    // dA_i(p) = sum_j (g_ij + g_ji) A_j(p)
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) {
        const double gij = g.data[static_cast<size_t>(i) * c + j] + g.data[static_cast<size_t>(j) * c + i];
        if (gij == 0.0) continue;
        for (int p = 0; p < hw; ++p)
          pa->grad.data[static_cast<size_t>(i) * hw + p] += gij * pa->value.data[static_cast<size_t>(j) * hw + p];
      }
  };
  return Var(node);
}

/// Circular shift of a [H,W] map: out(y,x) = in((y-dy) mod H, (x-dx) mod W).
inline Var roll2d(const Var& a, int dy, int dx) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("roll2d: need [H,W]");
  const int h = av.dim(0), w = av.dim(1);
  auto wrap = [](int v, int m) { return ((v % m) + m) % m; };
  Tensor out(av.shape);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.data[static_cast<size_t>(y) * w + x] =
          av.data[static_cast<size_t>(wrap(y - dy, h)) * w + wrap(x - dx, w)];
  auto node = detail::make(std::move(out), {a});
  NodePtr pa = a.node();
  node->backprop = [pa, h, w, dy, dx](const Tensor& g) {
    if (!pa->requires_grad) return;
    auto wrap = [](int v, int m) { return ((v % m) + m) % m; };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        pa->grad.data[static_cast<size_t>(wrap(y - dy, h)) * w + wrap(x - dx, w)] +=
            g.data[static_cast<size_t>(y) * w + x];
  };
  return Var(node);
}

inline Var square(const Var& a) { return mul(a, a); }

/// Sum of squares of all entries.
inline Var sqnorm(const Var& a) { return sum(square(a)); }

inline Var constant(Tensor t) { return Var::leaf(std::move(t), false); }
inline Var constant(double v) { return Var::leaf(Tensor::scalar(v), false); }

}  // namespace hairtx::ad
