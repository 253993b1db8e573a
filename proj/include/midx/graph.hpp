#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "midx/tensor.hpp"

namespace midx {

// Reverse-mode tape over Tensor values. A Graph is built per forward pass
// (define-by-run) and discarded after backward(). Handles are plain ints.
//
// Broadcast rule for binary elementwise ops: shapes must match exactly, or
// one operand has numel()==1 and is treated as a scalar. Gradients for the
// scalar side reduce-sum. Accumulation order is fixed (row-major), so
// results are bit-reproducible run to run.
class Graph {
 public:
  using Var = int;

  struct Node {
    std::vector<int> shape;
    std::vector<float> val;
    std::vector<float> grad;
    bool needs_grad = false;
  };

  Var constant(Tensor t) { return make(std::move(t.shape), std::move(t.data), false); }
  Var constant(std::vector<int> shape, std::vector<float> data) {
    return make(std::move(shape), std::move(data), false);
  }
  Var cscalar(float v) { return make({1}, {v}, false); }
  Var param(Tensor t) { return make(std::move(t.shape), std::move(t.data), true); }

  const std::vector<int>& shape(Var v) const { return nodes_[v].shape; }
  int64_t numel(Var v) const { return Tensor::numel_of(nodes_[v].shape); }
  std::vector<float>& val(Var v) { return nodes_[v].val; }
  const std::vector<float>& val(Var v) const { return nodes_[v].val; }
  std::vector<float>& grad(Var v) { return nodes_[v].grad; }
  float scalar(Var v) const { return nodes_[v].val[0]; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }
  Tensor tensor(Var v) const { return Tensor(nodes_[v].shape, nodes_[v].val); }

  // ---- elementwise binary ----
  Var add(Var a, Var b) { return binary(a, b, BinOp::Add); }
  Var sub(Var a, Var b) { return binary(a, b, BinOp::Sub); }
  Var mul(Var a, Var b) { return binary(a, b, BinOp::Mul); }
  Var div(Var a, Var b) { return binary(a, b, BinOp::Div); }
  Var minimum(Var a, Var b) { return binary(a, b, BinOp::Min); }
  Var maximum(Var a, Var b) { return binary(a, b, BinOp::Max); }

  // a*x + b with compile-time constants
  Var affine(Var x, float a, float b) {
    Var y = like(x);
    auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < xv.size(); ++i) yv[i] = a * xv[i] + b;
    if (record(y, {x})) {
      tape_.push_back([x, y, a](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += a * gy[i];
      });
    }
    return y;
  }
  Var scale(Var x, float a) { return affine(x, a, 0.f); }

  // ---- elementwise unary ----
  Var exp_(Var x) {
    return unary(x, [](float v) { return std::exp(v); },
                 [](float v, float y) { (void)v; return y; });
  }
  Var log_(Var x) {
    return unary(x, [](float v) { return std::log(std::max(v, 1e-12f)); },
                 [](float v, float y) { (void)y; return 1.f / std::max(v, 1e-12f); });
  }
  Var abs_(Var x) {
    return unary(x, [](float v) { return std::fabs(v); },
                 [](float v, float y) { (void)y; return v > 0 ? 1.f : (v < 0 ? -1.f : 0.f); });
  }
  Var relu(Var x) {
    return unary(x, [](float v) { return v > 0 ? v : 0.f; },
                 [](float v, float y) { (void)y; return v > 0 ? 1.f : 0.f; });
  }
  Var elu(Var x) {
    return unary(x, [](float v) { return v > 0 ? v : std::expm1(v); },
                 [](float v, float y) { return v > 0 ? 1.f : y + 1.f; });
  }
  Var sigmoid_(Var x) {
    return unary(x, [](float v) { return 1.f / (1.f + std::exp(-v)); },
                 [](float v, float y) { (void)v; return y * (1.f - y); });
  }
  Var softplus_(Var x) {
    return unary(x,
                 [](float v) { return v > 20.f ? v : std::log1p(std::exp(v)); },
                 [](float v, float y) { (void)y; return 1.f / (1.f + std::exp(-v)); });
  }
  Var clamp_(Var x, float lo, float hi) {
    return unary(x, [lo, hi](float v) { return std::min(std::max(v, lo), hi); },
                 [lo, hi](float v, float y) { (void)y; return (v >= lo && v <= hi) ? 1.f : 0.f; });
  }
  // sin(sqrt(u))/sqrt(u) and (1-cos(sqrt(u)))/u as smooth functions of u>=0.
  // Both are even in theta, so they (and their u-derivatives) are finite at 0;
  // series below keep the axis-angle map exact through the origin.
  Var sinc_sqrt(Var u) {
    return unary(u,
                 [](float v) {
                   if (v < 1e-6f) return 1.f - v / 6.f + v * v / 120.f;
                   float t = std::sqrt(v);
                   return std::sin(t) / t;
                 },
                 [](float v, float y) {
                   (void)y;
                   if (v < 1e-6f) return -1.f / 6.f + v / 60.f;
                   float t = std::sqrt(v);
                   return (t * std::cos(t) - std::sin(t)) / (2.f * v * t);
                 });
  }
  Var vers_sqrt(Var u) {
    return unary(u,
                 [](float v) {
                   if (v < 1e-6f) return 0.5f - v / 24.f + v * v / 720.f;
                   return (1.f - std::cos(std::sqrt(v))) / v;
                 },
                 [](float v, float y) {
                   (void)y;
                   if (v < 1e-6f) return -1.f / 24.f + v / 360.f;
                   float t = std::sqrt(v);
                   return (std::sin(t) * t / 2.f - (1.f - std::cos(t))) / (v * v);
                 });
  }

  // ---- reductions ----
  Var sum_(Var x) {
    double acc = 0.0;
    for (float v : nodes_[x].val) acc += v;
    Var y = make({1}, {static_cast<float>(acc)}, false);
    if (record(y, {x})) {
      tape_.push_back([x, y](Graph& g) {
        float gy = g.nodes_[y].grad[0];
        for (auto& gx : g.nodes_[x].grad) gx += gy;
      });
    }
    return y;
  }
  Var mean_(Var x) { return scale(sum_(x), 1.f / static_cast<float>(numel(x))); }

  // [C,H,W] -> [1,H,W], mean over channels
  Var mean_ch(Var x) {
    const auto& s = nodes_[x].shape;
    int C = s[0], H = s[1], W = s[2];
    Var y = make({1, H, W}, std::vector<float>(static_cast<size_t>(H) * W, 0.f),
                 false);
    auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    const size_t hw = static_cast<size_t>(H) * W;
    for (int c = 0; c < C; ++c)
      for (size_t i = 0; i < hw; ++i) yv[i] += xv[c * hw + i];
    const float inv = 1.f / C;
    for (auto& v : yv) v *= inv;
    if (record(y, {x})) {
      tape_.push_back([x, y, C, hw, inv](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c)
          for (size_t i = 0; i < hw; ++i) gx[c * hw + i] += inv * gy[i];
      });
    }
    return y;
  }

  // [C,H,W] -> [C], global average pool
  Var mean_spatial(Var x) {
    const auto& s = nodes_[x].shape;
    int C = s[0];
    const size_t hw = static_cast<size_t>(s[1]) * s[2];
    std::vector<float> out(C, 0.f);
    auto& xv = nodes_[x].val;
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (size_t i = 0; i < hw; ++i) acc += xv[c * hw + i];
      out[c] = static_cast<float>(acc / static_cast<double>(hw));
    }
    Var y = make({C}, std::move(out), false);
    if (record(y, {x})) {
      const float inv = 1.f / static_cast<float>(hw);
      tape_.push_back([x, y, C, hw, inv](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c)
          for (size_t i = 0; i < hw; ++i) gx[c * hw + i] += inv * gy[c];
      });
    }
    return y;
  }

  // ---- shape ops ----
  Var reshape(Var x, std::vector<int> new_shape) {
    if (Tensor::numel_of(new_shape) != numel(x))
      throw std::invalid_argument("reshape: numel mismatch");
    Var y = make(std::move(new_shape), nodes_[x].val, false);
    if (record(y, {x})) {
      tape_.push_back([x, y](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
      });
    }
    return y;
  }

  Var slice_flat(Var x, int offset, int count) {
    std::vector<float> out(nodes_[x].val.begin() + offset,
                           nodes_[x].val.begin() + offset + count);
    Var y = make({count}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, offset, count](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (int i = 0; i < count; ++i) gx[offset + i] += gy[i];
      });
    }
    return y;
  }

  Var concat_ch(const std::vector<Var>& xs) {
    int H = nodes_[xs[0]].shape[1], W = nodes_[xs[0]].shape[2];
    int C = 0;
    for (Var v : xs) {
      if (nodes_[v].shape[1] != H || nodes_[v].shape[2] != W)
        throw std::invalid_argument("concat_ch: spatial mismatch");
      C += nodes_[v].shape[0];
    }
    std::vector<float> out;
    out.reserve(static_cast<size_t>(C) * H * W);
    for (Var v : xs) out.insert(out.end(), nodes_[v].val.begin(), nodes_[v].val.end());
    Var y = make({C, H, W}, std::move(out), false);
    bool ng = false;
    for (Var v : xs) ng = ng || nodes_[v].needs_grad;
    if (ng) {
      nodes_[y].needs_grad = true;
      nodes_[y].grad.assign(nodes_[y].val.size(), 0.f);
      std::vector<Var> ins = xs;
      tape_.push_back([ins, y](Graph& g) {
        size_t off = 0;
        auto& gy = g.nodes_[y].grad;
        for (Var v : ins) {
          auto& n = g.nodes_[v];
          if (n.needs_grad)
            for (size_t i = 0; i < n.val.size(); ++i) n.grad[i] += gy[off + i];
          off += n.val.size();
        }
      });
    }
    return y;
  }

  Var slice_ch(Var x, int from, int count) {
    const auto& s = nodes_[x].shape;
    const size_t hw = static_cast<size_t>(s[1]) * s[2];
    std::vector<float> out(nodes_[x].val.begin() + from * hw,
                           nodes_[x].val.begin() + (from + count) * hw);
    Var y = make({count, s[1], s[2]}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, from, hw](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (size_t i = 0; i < gy.size(); ++i) gx[from * hw + i] += gy[i];
      });
    }
    return y;
  }

  Var crop(Var x, int y0, int x0, int h, int w) {
    const auto& s = nodes_[x].shape;
    int C = s[0], H = s[1], W = s[2];
    (void)H;
    std::vector<float> out(static_cast<size_t>(C) * h * w);
    auto& xv = nodes_[x].val;
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
          out[(static_cast<size_t>(c) * h + yy) * w + xx] =
              xv[(static_cast<size_t>(c) * s[1] + y0 + yy) * W + x0 + xx];
    Var y = make({C, h, w}, std::move(out), false);
    if (record(y, {x})) {
      int Hs = s[1];
      tape_.push_back([x, y, y0, x0, h, w, C, Hs, W](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
              gx[(static_cast<size_t>(c) * Hs + y0 + yy) * W + x0 + xx] +=
                  gy[(static_cast<size_t>(c) * h + yy) * w + xx];
      });
    }
    return y;
  }

  // gather scalar vars (each numel 1) into one tensor
  Var stack_(const std::vector<Var>& xs, std::vector<int> shape) {
    std::vector<float> out(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) out[i] = nodes_[xs[i]].val[0];
    Var y = make(std::move(shape), std::move(out), false);
    bool ng = false;
    for (Var v : xs) ng = ng || nodes_[v].needs_grad;
    if (ng) {
      nodes_[y].needs_grad = true;
      nodes_[y].grad.assign(nodes_[y].val.size(), 0.f);
      std::vector<Var> ins = xs;
      tape_.push_back([ins, y](Graph& g) {
        auto& gy = g.nodes_[y].grad;
        for (size_t i = 0; i < ins.size(); ++i) {
          auto& n = g.nodes_[ins[i]];
          if (n.needs_grad) n.grad[0] += gy[i];
        }
      });
    }
    return y;
  }

  // value copy with the tape cut
  Var detach(Var x) { return constant(nodes_[x].shape, nodes_[x].val); }

  // ---- linear algebra ----
  // y = op(A) * op(B), A:[n,k] (or [k,n] if ta), B:[k,m] (or [m,k] if tb)
  Var matmul(Var A, Var B, bool ta = false, bool tb = false) {
    const auto& sa = nodes_[A].shape;
    const auto& sb = nodes_[B].shape;
    int n = ta ? sa[1] : sa[0];
    int k = ta ? sa[0] : sa[1];
    int kb = tb ? sb[1] : sb[0];
    int m = tb ? sb[0] : sb[1];
    if (k != kb) throw std::invalid_argument("matmul: inner dim mismatch");
    std::vector<float> out(static_cast<size_t>(n) * m, 0.f);
    const auto& av = nodes_[A].val;
    const auto& bv = nodes_[B].val;
    auto aat = [&](int i, int j) { return ta ? av[static_cast<size_t>(j) * sa[1] + i] : av[static_cast<size_t>(i) * sa[1] + j]; };
    auto bat = [&](int i, int j) { return tb ? bv[static_cast<size_t>(j) * sb[1] + i] : bv[static_cast<size_t>(i) * sb[1] + j]; };
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        float a = aat(i, p);
        for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] += a * bat(p, j);
      }
    Var y = make({n, m}, std::move(out), false);
    if (record(y, {A, B})) {
      tape_.push_back([A, B, y, ta, tb, n, m, k](Graph& g) {
        const auto& sa = g.nodes_[A].shape;
        const auto& sb = g.nodes_[B].shape;
        const auto& av = g.nodes_[A].val;
        const auto& bv = g.nodes_[B].val;
        const auto& gy = g.nodes_[y].grad;
        if (g.nodes_[A].needs_grad) {
          auto& ga = g.nodes_[A].grad;
          // dA(i,p) += gy(i,j) * B(p,j);  transposed storage handled per flag
          for (int i = 0; i < n; ++i)
            for (int p = 0; p < k; ++p) {
              float acc = 0.f;
              for (int j = 0; j < m; ++j) {
                float b = tb ? bv[static_cast<size_t>(j) * sb[1] + p] : bv[static_cast<size_t>(p) * sb[1] + j];
                acc += gy[static_cast<size_t>(i) * m + j] * b;
              }
              if (ta)
                ga[static_cast<size_t>(p) * sa[1] + i] += acc;
              else
                ga[static_cast<size_t>(i) * sa[1] + p] += acc;
            }
        }
        if (g.nodes_[B].needs_grad) {
          auto& gb = g.nodes_[B].grad;
          for (int p = 0; p < k; ++p)
            for (int j = 0; j < m; ++j) {
              float acc = 0.f;
              for (int i = 0; i < n; ++i) {
                float a = ta ? av[static_cast<size_t>(p) * sa[1] + i] : av[static_cast<size_t>(i) * sa[1] + p];
                acc += a * gy[static_cast<size_t>(i) * m + j];
              }
              if (tb)
                gb[static_cast<size_t>(j) * sb[1] + p] += acc;
              else
                gb[static_cast<size_t>(p) * sb[1] + j] += acc;
            }
        }
      });
    }
    return y;
  }

  // y[m] = W[m,n] x[n] + b[m]
  Var linear(Var x, Var W, Var b) {
    const auto& sw = nodes_[W].shape;
    int m = sw[0], n = sw[1];
    if (numel(x) != n) throw std::invalid_argument("linear: input size mismatch");
    std::vector<float> out(m);
    const auto& xv = nodes_[x].val;
    const auto& wv = nodes_[W].val;
    const auto& bv = nodes_[b].val;
    for (int i = 0; i < m; ++i) {
      float acc = bv[i];
      const float* wr = &wv[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) acc += wr[j] * xv[j];
      out[i] = acc;
    }
    Var y = make({m}, std::move(out), false);
    if (record(y, {x, W, b})) {
      tape_.push_back([x, W, b, y, m, n](Graph& g) {
        const auto& gy = g.nodes_[y].grad;
        const auto& xv = g.nodes_[x].val;
        const auto& wv = g.nodes_[W].val;
        if (g.nodes_[x].needs_grad) {
          auto& gx = g.nodes_[x].grad;
          for (int i = 0; i < m; ++i) {
            const float gyi = gy[i];
            const float* wr = &wv[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) gx[j] += gyi * wr[j];
          }
        }
        if (g.nodes_[W].needs_grad) {
          auto& gw = g.nodes_[W].grad;
          for (int i = 0; i < m; ++i) {
            const float gyi = gy[i];
            float* gwr = &gw[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) gwr[j] += gyi * xv[j];
          }
        }
        if (g.nodes_[b].needs_grad) {
          auto& gb = g.nodes_[b].grad;
          for (int i = 0; i < m; ++i) gb[i] += gy[i];
        }
      });
    }
    return y;
  }

  // row-wise softmax on [n,m]
  Var softmax_rows(Var x) {
    const auto& s = nodes_[x].shape;
    int n = s[0], m = s[1];
    std::vector<float> out(nodes_[x].val.size());
    const auto& xv = nodes_[x].val;
    for (int i = 0; i < n; ++i) {
      const float* r = &xv[static_cast<size_t>(i) * m];
      float mx = r[0];
      for (int j = 1; j < m; ++j) mx = std::max(mx, r[j]);
      double den = 0.0;
      for (int j = 0; j < m; ++j) den += std::exp(static_cast<double>(r[j] - mx));
      for (int j = 0; j < m; ++j)
        out[static_cast<size_t>(i) * m + j] =
            static_cast<float>(std::exp(static_cast<double>(r[j] - mx)) / den);
    }
    Var y = make({n, m}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, n, m](Graph& g) {
        const auto& yv = g.nodes_[y].val;
        const auto& gy = g.nodes_[y].grad;
        auto& gx = g.nodes_[x].grad;
        for (int i = 0; i < n; ++i) {
          const float* yr = &yv[static_cast<size_t>(i) * m];
          const float* gr = &gy[static_cast<size_t>(i) * m];
          float dot = 0.f;
          for (int j = 0; j < m; ++j) dot += yr[j] * gr[j];
          for (int j = 0; j < m; ++j)
            gx[static_cast<size_t>(i) * m + j] += yr[j] * (gr[j] - dot);
        }
      });
    }
    return y;
  }

  // logits[i,j] += table[idx[i*m+j]]
  Var add_gather(Var logits, Var table, const std::vector<int>& idx) {
    Var y = like(logits);
    const auto& lv = nodes_[logits].val;
    const auto& tv = nodes_[table].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < lv.size(); ++i) yv[i] = lv[i] + tv[idx[i]];
    if (record(y, {logits, table})) {
      std::vector<int> id = idx;
      tape_.push_back([logits, table, y, id](Graph& g) {
        const auto& gy = g.nodes_[y].grad;
        if (g.nodes_[logits].needs_grad) {
          auto& gl = g.nodes_[logits].grad;
          for (size_t i = 0; i < gy.size(); ++i) gl[i] += gy[i];
        }
        if (g.nodes_[table].needs_grad) {
          auto& gt = g.nodes_[table].grad;
          for (size_t i = 0; i < gy.size(); ++i) gt[id[i]] += gy[i];
        }
      });
    }
    return y;
  }

  // ---- conv / pooling / resampling ----
  Var conv2d(Var x, Var W, Var b, int stride, int pad) {
    const auto& sx = nodes_[x].shape;
    const auto& sw = nodes_[W].shape;
    int Ci = sx[0], H = sx[1], Wd = sx[2];
    int Co = sw[0], k = sw[2];
    if (sw[1] != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    int Ho = (H + 2 * pad - k) / stride + 1;
    int Wo = (Wd + 2 * pad - k) / stride + 1;
    std::vector<float> out(static_cast<size_t>(Co) * Ho * Wo, 0.f);
    const auto& xv = nodes_[x].val;
    const auto& wv = nodes_[W].val;
    const auto& bv = nodes_[b].val;
    for (int co = 0; co < Co; ++co) {
      float* op = &out[static_cast<size_t>(co) * Ho * Wo];
      for (int ci = 0; ci < Ci; ++ci) {
        const float* xp = &xv[static_cast<size_t>(ci) * H * Wd];
        const float* wp = &wv[(static_cast<size_t>(co) * Ci + ci) * k * k];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const float w = wp[ky * k + kx];
            if (w == 0.f) continue;
            for (int oy = 0; oy < Ho; ++oy) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              const float* xr = &xp[static_cast<size_t>(iy) * Wd];
              float* orow = &op[static_cast<size_t>(oy) * Wo];
              int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
              int ox1 = std::min(Wo, (Wd - 1 + pad - kx) / stride + 1);
              if (stride == 1) {
                const float* xs = xr - pad + kx;
                for (int ox = ox0; ox < ox1; ++ox) orow[ox] += w * xs[ox];
              } else {
                for (int ox = ox0; ox < ox1; ++ox)
                  orow[ox] += w * xr[ox * stride - pad + kx];
              }
            }
          }
      }
      const float bb = bv[co];
      for (int i = 0; i < Ho * Wo; ++i) op[i] += bb;
    }
    Var y = make({Co, Ho, Wo}, std::move(out), false);
    if (record(y, {x, W, b})) {
      tape_.push_back([x, W, b, y, stride, pad, Ci, H, Wd, Co, k, Ho, Wo](Graph& g) {
        const auto& xv = g.nodes_[x].val;
        const auto& wv = g.nodes_[W].val;
        const auto& gy = g.nodes_[y].grad;
        const bool gx_on = g.nodes_[x].needs_grad;
        const bool gw_on = g.nodes_[W].needs_grad;
        for (int co = 0; co < Co; ++co) {
          const float* gyp = &gy[static_cast<size_t>(co) * Ho * Wo];
          for (int ci = 0; ci < Ci; ++ci) {
            const float* xp = &xv[static_cast<size_t>(ci) * H * Wd];
            const float* wp = &wv[(static_cast<size_t>(co) * Ci + ci) * k * k];
            float* gxp = gx_on ? &g.nodes_[x].grad[static_cast<size_t>(ci) * H * Wd] : nullptr;
            float* gwp = gw_on ? &g.nodes_[W].grad[(static_cast<size_t>(co) * Ci + ci) * k * k] : nullptr;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const float w = wp[ky * k + kx];
                float gw_acc = 0.f;
                for (int oy = 0; oy < Ho; ++oy) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= H) continue;
                  const float* gyr = &gyp[static_cast<size_t>(oy) * Wo];
                  int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
                  int ox1 = std::min(Wo, (Wd - 1 + pad - kx) / stride + 1);
                  const float* xr = &xp[static_cast<size_t>(iy) * Wd];
                  if (gx_on) {
                    float* gxr = &gxp[static_cast<size_t>(iy) * Wd];
                    if (stride == 1) {
                      float* gxs = gxr - pad + kx;
                      for (int ox = ox0; ox < ox1; ++ox) gxs[ox] += w * gyr[ox];
                    } else {
                      for (int ox = ox0; ox < ox1; ++ox)
                        gxr[ox * stride - pad + kx] += w * gyr[ox];
                    }
                  }
                  if (gw_on) {
                    if (stride == 1) {
                      const float* xs = xr - pad + kx;
                      for (int ox = ox0; ox < ox1; ++ox) gw_acc += xs[ox] * gyr[ox];
                    } else {
                      for (int ox = ox0; ox < ox1; ++ox)
                        gw_acc += xr[ox * stride - pad + kx] * gyr[ox];
                    }
                  }
                }
                if (gw_on) gwp[ky * k + kx] += gw_acc;
              }
          }
        }
        if (g.nodes_[b].needs_grad) {
          auto& gb = g.nodes_[b].grad;
          for (int co = 0; co < Co; ++co) {
            const float* gyp = &gy[static_cast<size_t>(co) * Ho * Wo];
            float acc = 0.f;
            for (int i = 0; i < Ho * Wo; ++i) acc += gyp[i];
            gb[co] += acc;
          }
        }
      });
    }
    return y;
  }

  Var up_nearest2(Var x) {
    const auto& s = nodes_[x].shape;
    int C = s[0], H = s[1], W = s[2];
    std::vector<float> out(static_cast<size_t>(C) * H * 2 * W * 2);
    const auto& xv = nodes_[x].val;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y) {
        const float* xr = &xv[(static_cast<size_t>(c) * H + y / 2) * W];
        float* orow = &out[(static_cast<size_t>(c) * 2 * H + y) * 2 * W];
        for (int xj = 0; xj < 2 * W; ++xj) orow[xj] = xr[xj / 2];
      }
    Var y = make({C, 2 * H, 2 * W}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, C, H, W](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        const auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c)
          for (int yy = 0; yy < 2 * H; ++yy) {
            float* gxr = &gx[(static_cast<size_t>(c) * H + yy / 2) * W];
            const float* gyr = &gy[(static_cast<size_t>(c) * 2 * H + yy) * 2 * W];
            for (int xj = 0; xj < 2 * W; ++xj) gxr[xj / 2] += gyr[xj];
          }
      });
    }
    return y;
  }

  // bilinear resize; corners map to corners (consistent with the
  // pixel-center convention used across the geometry stack)
  Var resize_bilinear(Var x, int Ho, int Wo) {
    const auto& s = nodes_[x].shape;
    int C = s[0], H = s[1], W = s[2];
    if (H == Ho && W == Wo) return x;
    auto mapc = [](int o, int No, int Ni) {
      if (No == 1) return 0.f;
      return static_cast<float>(o) * static_cast<float>(Ni - 1) / static_cast<float>(No - 1);
    };
    struct Tap { int i0, i1; float w1; };
    std::vector<Tap> ty(Ho), tx(Wo);
    for (int o = 0; o < Ho; ++o) {
      float f = mapc(o, Ho, H);
      int i0 = std::min(static_cast<int>(f), H - 1);
      ty[o] = {i0, std::min(i0 + 1, H - 1), f - i0};
    }
    for (int o = 0; o < Wo; ++o) {
      float f = mapc(o, Wo, W);
      int i0 = std::min(static_cast<int>(f), W - 1);
      tx[o] = {i0, std::min(i0 + 1, W - 1), f - i0};
    }
    std::vector<float> out(static_cast<size_t>(C) * Ho * Wo);
    const auto& xv = nodes_[x].val;
    for (int c = 0; c < C; ++c) {
      const float* xp = &xv[static_cast<size_t>(c) * H * W];
      float* op = &out[static_cast<size_t>(c) * Ho * Wo];
      for (int oy = 0; oy < Ho; ++oy) {
        const Tap& a = ty[oy];
        for (int ox = 0; ox < Wo; ++ox) {
          const Tap& bx = tx[ox];
          float v00 = xp[a.i0 * W + bx.i0], v01 = xp[a.i0 * W + bx.i1];
          float v10 = xp[a.i1 * W + bx.i0], v11 = xp[a.i1 * W + bx.i1];
          op[oy * Wo + ox] = (1 - a.w1) * ((1 - bx.w1) * v00 + bx.w1 * v01) +
                             a.w1 * ((1 - bx.w1) * v10 + bx.w1 * v11);
        }
      }
    }
    Var y = make({C, Ho, Wo}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, C, H, W, Ho, Wo, ty, tx](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        const auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c) {
          float* gxp = &gx[static_cast<size_t>(c) * H * W];
          const float* gyp = &gy[static_cast<size_t>(c) * Ho * Wo];
          for (int oy = 0; oy < Ho; ++oy) {
            const Tap& a = ty[oy];
            for (int ox = 0; ox < Wo; ++ox) {
              const Tap& bx = tx[ox];
              float gv = gyp[oy * Wo + ox];
              gxp[a.i0 * W + bx.i0] += (1 - a.w1) * (1 - bx.w1) * gv;
              gxp[a.i0 * W + bx.i1] += (1 - a.w1) * bx.w1 * gv;
              gxp[a.i1 * W + bx.i0] += a.w1 * (1 - bx.w1) * gv;
              gxp[a.i1 * W + bx.i1] += a.w1 * bx.w1 * gv;
            }
          }
        }
      });
    }
    return y;
  }

  // 3x3 box filter with reflect-101 padding (SSIM local statistics)
  Var pool3x3(Var x) {
    const auto& s = nodes_[x].shape;
    int C = s[0], H = s[1], W = s[2];
    auto refl = [](int i, int n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
      return std::min(std::max(i, 0), n - 1);
    };
    std::vector<float> out(nodes_[x].val.size(), 0.f);
    const auto& xv = nodes_[x].val;
    for (int c = 0; c < C; ++c) {
      const float* xp = &xv[static_cast<size_t>(c) * H * W];
      float* op = &out[static_cast<size_t>(c) * H * W];
      for (int y = 0; y < H; ++y)
        for (int xj = 0; xj < W; ++xj) {
          float acc = 0.f;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              acc += xp[refl(y + dy, H) * W + refl(xj + dx, W)];
          op[y * W + xj] = acc / 9.f;
        }
    }
    Var y = make({C, H, W}, std::move(out), false);
    if (record(y, {x})) {
      tape_.push_back([x, y, C, H, W, refl](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        const auto& gy = g.nodes_[y].grad;
        for (int c = 0; c < C; ++c) {
          float* gxp = &gx[static_cast<size_t>(c) * H * W];
          const float* gyp = &gy[static_cast<size_t>(c) * H * W];
          for (int yy = 0; yy < H; ++yy)
            for (int xj = 0; xj < W; ++xj) {
              const float gv = gyp[yy * W + xj] / 9.f;
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                  gxp[refl(yy + dy, H) * W + refl(xj + dx, W)] += gv;
            }
        }
      });
    }
    return y;
  }

  // Bilinear sampling of src[C,H,W] at coords[2,Ho,Wo] (channel 0 = u/column,
  // channel 1 = v/row, in source pixel units, centers at integers). Border
  // policy is clamp-to-edge; out_mask (optional) records in-bounds pixels.
  // Differentiable in both src and coords; clamping zeroes the coordinate
  // gradient outside the frame, which keeps it finite.
  Var grid_sample(Var src, Var coords, Mask* out_mask = nullptr) {
    const auto& ss = nodes_[src].shape;
    const auto& sc = nodes_[coords].shape;
    int C = ss[0], H = ss[1], W = ss[2];
    int Ho = sc[1], Wo = sc[2];
    if (sc[0] != 2) throw std::invalid_argument("grid_sample: coords must be [2,H,W]");
    if (out_mask) *out_mask = Mask(Ho, Wo, 0);
    std::vector<float> out(static_cast<size_t>(C) * Ho * Wo);
    const auto& sv = nodes_[src].val;
    const auto& cv = nodes_[coords].val;
    const size_t npix = static_cast<size_t>(Ho) * Wo;
    for (size_t i = 0; i < npix; ++i) {
      float u = cv[i], v = cv[npix + i];
      if (out_mask && u >= 0.f && u <= W - 1.f && v >= 0.f && v <= H - 1.f &&
          std::isfinite(u) && std::isfinite(v))
        out_mask->data[i] = 1;
      float uc = std::min(std::max(u, 0.f), static_cast<float>(W - 1));
      float vc = std::min(std::max(v, 0.f), static_cast<float>(H - 1));
      int x0 = std::min(static_cast<int>(uc), W - 2 >= 0 ? W - 2 : 0);
      int y0 = std::min(static_cast<int>(vc), H - 2 >= 0 ? H - 2 : 0);
      x0 = std::max(x0, 0);
      y0 = std::max(y0, 0);
      int x1 = std::min(x0 + 1, W - 1);
      int y1 = std::min(y0 + 1, H - 1);
      float wx = uc - x0, wy = vc - y0;
      for (int c = 0; c < C; ++c) {
        const float* sp = &sv[static_cast<size_t>(c) * H * W];
        float v00 = sp[y0 * W + x0], v01 = sp[y0 * W + x1];
        float v10 = sp[y1 * W + x0], v11 = sp[y1 * W + x1];
        out[c * npix + i] = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                            wy * ((1 - wx) * v10 + wx * v11);
      }
    }
    Var y = make({C, Ho, Wo}, std::move(out), false);
    if (record(y, {src, coords})) {
      tape_.push_back([src, coords, y, C, H, W, npix](Graph& g) {
        const auto& sv = g.nodes_[src].val;
        const auto& cv = g.nodes_[coords].val;
        const auto& gy = g.nodes_[y].grad;
        const bool gs_on = g.nodes_[src].needs_grad;
        const bool gc_on = g.nodes_[coords].needs_grad;
        for (size_t i = 0; i < npix; ++i) {
          float u = cv[i], v = cv[npix + i];
          float uc = std::min(std::max(u, 0.f), static_cast<float>(W - 1));
          float vc = std::min(std::max(v, 0.f), static_cast<float>(H - 1));
          bool du_in = (u > 0.f && u < W - 1.f);
          bool dv_in = (v > 0.f && v < H - 1.f);
          int x0 = std::min(static_cast<int>(uc), W - 2 >= 0 ? W - 2 : 0);
          int y0 = std::min(static_cast<int>(vc), H - 2 >= 0 ? H - 2 : 0);
          x0 = std::max(x0, 0);
          y0 = std::max(y0, 0);
          int x1 = std::min(x0 + 1, W - 1);
          int y1 = std::min(y0 + 1, H - 1);
          float wx = uc - x0, wy = vc - y0;
          float gu = 0.f, gv = 0.f;
          for (int c = 0; c < C; ++c) {
            const float* sp = &sv[static_cast<size_t>(c) * H * W];
            const float go = gy[c * npix + i];
            if (go == 0.f) continue;
            float v00 = sp[y0 * W + x0], v01 = sp[y0 * W + x1];
            float v10 = sp[y1 * W + x0], v11 = sp[y1 * W + x1];
            if (gs_on) {
              float* gp = &g.nodes_[src].grad[static_cast<size_t>(c) * H * W];
              gp[y0 * W + x0] += go * (1 - wy) * (1 - wx);
              gp[y0 * W + x1] += go * (1 - wy) * wx;
              gp[y1 * W + x0] += go * wy * (1 - wx);
              gp[y1 * W + x1] += go * wy * wx;
            }
            if (gc_on) {
              gu += go * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
              gv += go * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
            }
          }
          if (gc_on) {
            auto& gc = g.nodes_[coords].grad;
            if (du_in) gc[i] += gu;
            if (dv_in) gc[npix + i] += gv;
          }
        }
      });
    }
    return y;
  }

  // inverted dropout with an explicit per-call seed
  Var dropout(Var x, float rate, uint64_t seed) {
    if (rate <= 0.f) return x;
    Pcg32 rng(seed);
    const float keep = 1.f - rate;
    std::vector<uint8_t> m(nodes_[x].val.size());
    for (auto& b : m) b = rng.uniform() < keep ? 1 : 0;
    Var y = like(x);
    auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    const float inv = 1.f / keep;
    for (size_t i = 0; i < xv.size(); ++i) yv[i] = m[i] ? xv[i] * inv : 0.f;
    if (record(y, {x})) {
      tape_.push_back([x, y, m, inv](Graph& g) {
        auto& gx = g.nodes_[x].grad;
        const auto& gy = g.nodes_[y].grad;
        for (size_t i = 0; i < gx.size(); ++i)
          if (m[i]) gx[i] += gy[i] * inv;
      });
    }
    return y;
  }

  // ---- backward ----
  void backward(Var loss) {
    if (numel(loss) != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!nodes_[loss].needs_grad) return;
    nodes_[loss].grad[0] = 1.f;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)(*this);
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class BinOp { Add, Sub, Mul, Div, Min, Max };

  std::vector<Node> nodes_;
  std::vector<std::function<void(Graph&)>> tape_;

  Var make(std::vector<int> shape, std::vector<float> data, bool needs_grad) {
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(data);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad.assign(n.val.size(), 0.f);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var like(Var x) {
    return make(nodes_[x].shape, std::vector<float>(nodes_[x].val.size()), false);
  }

  // marks output as needing grad if any input does; returns whether to record
  bool record(Var y, std::initializer_list<Var> inputs) {
    bool ng = false;
    for (Var v : inputs) ng = ng || nodes_[v].needs_grad;
    if (ng) {
      nodes_[y].needs_grad = true;
      nodes_[y].grad.assign(nodes_[y].val.size(), 0.f);
    }
    return ng;
  }

  template <typename F, typename DF>
  Var unary(Var x, F f, DF df) {
    Var y = like(x);
    auto& xv = nodes_[x].val;
    auto& yv = nodes_[y].val;
    for (size_t i = 0; i < xv.size(); ++i) yv[i] = f(xv[i]);
    if (record(y, {x})) {
      tape_.push_back([x, y, df](Graph& g) {
        const auto& xv = g.nodes_[x].val;
        const auto& yv = g.nodes_[y].val;
        const auto& gy = g.nodes_[y].grad;
        auto& gx = g.nodes_[x].grad;
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += df(xv[i], yv[i]) * gy[i];
      });
    }
    return y;
  }

  Var binary(Var a, Var b, BinOp op) {
    const bool sa = numel(a) == 1, sb = numel(b) == 1;
    if (!sa && !sb && !same_shape(nodes_[a].shape, nodes_[b].shape))
      throw std::invalid_argument("binary op: shape mismatch " + shape_str(nodes_[a].shape) +
                                  " vs " + shape_str(nodes_[b].shape));
    Var big = sa ? b : a;
    Var y = like(big);
    const auto& av = nodes_[a].val;
    const auto& bv = nodes_[b].val;
    auto& yv = nodes_[y].val;
    const size_t n = yv.size();
    for (size_t i = 0; i < n; ++i) {
      float x = av[sa ? 0 : i], z = bv[sb ? 0 : i];
      switch (op) {
        case BinOp::Add: yv[i] = x + z; break;
        case BinOp::Sub: yv[i] = x - z; break;
        case BinOp::Mul: yv[i] = x * z; break;
        case BinOp::Div: yv[i] = x / z; break;
        case BinOp::Min: yv[i] = std::min(x, z); break;
        case BinOp::Max: yv[i] = std::max(x, z); break;
      }
    }
    if (record(y, {a, b})) {
      tape_.push_back([a, b, y, op, sa, sb, n](Graph& g) {
        const auto& av = g.nodes_[a].val;
        const auto& bv = g.nodes_[b].val;
        const auto& gy = g.nodes_[y].grad;
        const bool ga_on = g.nodes_[a].needs_grad;
        const bool gb_on = g.nodes_[b].needs_grad;
        for (size_t i = 0; i < n; ++i) {
          float x = av[sa ? 0 : i], z = bv[sb ? 0 : i];
          float gyv = gy[i];
          float da = 0.f, db = 0.f;
          switch (op) {
            case BinOp::Add: da = gyv; db = gyv; break;
            case BinOp::Sub: da = gyv; db = -gyv; break;
            case BinOp::Mul: da = gyv * z; db = gyv * x; break;
            case BinOp::Div: da = gyv / z; db = -gyv * x / (z * z); break;
            case BinOp::Min:
              if (x <= z) da = gyv; else db = gyv;
              break;
            case BinOp::Max:
              if (x >= z) da = gyv; else db = gyv;
              break;
          }
          if (ga_on) g.nodes_[a].grad[sa ? 0 : i] += da;
          if (gb_on) g.nodes_[b].grad[sb ? 0 : i] += db;
        }
      });
    }
    return y;
  }
};

using Var = Graph::Var;

}  // namespace midx
