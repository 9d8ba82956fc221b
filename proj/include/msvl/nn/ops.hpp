#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msvl/error.hpp"
#include "msvl/nn/graph.hpp"
#include "msvl/nn/tensor.hpp"

namespace msvl::nn {

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw InvalidInput(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw InvalidInput(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
inline void gemm_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      const double* arow = a + i * n;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      const double* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank("matmul", av, 2);
  detail::require_rank("matmul", bv, 2);
  if (av.dim(1) != bv.dim(0)) detail::shape_error("matmul", av.shape(), bv.shape());
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  detail::gemm(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(ia)) detail::gemm_bt(gy.data(), g.value(ib).data(), g.accumulate(ia).data(), m, n, k);
    if (g.requires_grad(ib)) detail::gemm_at(g.value(ia).data(), gy.data(), g.accumulate(ib).data(), m, k, n);
  });
}

/// Fully connected layer: x[n,in] * w[in,out] + b[out].
inline Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require_rank("linear", xv, 2);
  detail::require_rank("linear", wv, 2);
  if (xv.dim(1) != wv.dim(0)) detail::shape_error("linear", xv.shape(), wv.shape());
  if (bv.size() != wv.dim(1)) detail::shape_error("linear(bias)", wv.shape(), bv.shape());
  const std::size_t n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(1);
  Tensor out({n, out_dim});
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.data(), bv.data() + out_dim, out.data() + i * out_dim);
  detail::gemm(xv.data(), wv.data(), out.data(), n, in, out_dim);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.graph().record("linear", std::move(out), {x, w, b}, [=](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(ix)) detail::gemm_bt(gy.data(), g.value(iw).data(), g.accumulate(ix).data(), n, out_dim, in);
    if (g.requires_grad(iw)) detail::gemm_at(g.value(ix).data(), gy.data(), g.accumulate(iw).data(), n, in, out_dim);
    if (g.requires_grad(ib)) {
      Tensor& gb = g.accumulate(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gy[i * out_dim + j];
    }
  });
}

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// 2-D convolution (cross-correlation). x[N,C,H,W], w[O,C/groups,KH,KW], b[O].
/// With groups = g, channels split into g independent convolutions.
inline Var conv2d(Var x, Var w, Var b, Conv2dSpec spec) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require_rank("conv2d", xv, 4);
  detail::require_rank("conv2d", wv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::size_t o = wv.dim(0), cg = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  const std::size_t groups = spec.groups, s = spec.stride, p = spec.padding;
  if (groups == 0 || s == 0 || c % groups != 0 || o % groups != 0 || cg != c / groups)
    detail::shape_error("conv2d", xv.shape(), wv.shape());
  if (bv.size() != o) detail::shape_error("conv2d(bias)", wv.shape(), bv.shape());
  if (h + 2 * p < kh || wd + 2 * p < kw) detail::shape_error("conv2d(kernel larger than input)", xv.shape(), wv.shape());
  const std::size_t oh = (h + 2 * p - kh) / s + 1, ow = (wd + 2 * p - kw) / s + 1;
  const std::size_t og = o / groups;

  // Valid output column range for a kernel column offset.
  auto col_range = [=](std::size_t kx, std::size_t& lo, std::size_t& hi) {
    const long off = static_cast<long>(kx) - static_cast<long>(p);
    long first = off >= 0 ? 0 : (-off + static_cast<long>(s) - 1) / static_cast<long>(s);
    long last = (static_cast<long>(wd) - 1 - off);
    last = last < 0 ? -1 : last / static_cast<long>(s);
    last = std::min<long>(last, static_cast<long>(ow) - 1);
    lo = static_cast<std::size_t>(first);
    hi = last < first ? lo : static_cast<std::size_t>(last + 1);
  };

  Tensor out({n, o, oh, ow});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oi = 0; oi < o; ++oi) {
      double* plane = out.data() + (ni * o + oi) * oh * ow;
      std::fill(plane, plane + oh * ow, bv[oi]);
      const std::size_t gi = oi / og;
      for (std::size_t ci = 0; ci < cg; ++ci) {
        const double* in = xv.data() + (ni * c + gi * cg + ci) * h * wd;
        const double* ker = wv.data() + ((oi * cg + ci) * kh) * kw;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wval = ker[ky * kw + kx];
            std::size_t lo, hi;
            col_range(kx, lo, hi);
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              const std::size_t base = static_cast<std::size_t>(iy) * wd + lo * s + kx - p;
              const double* irow = in + base;
              double* orow = plane + oy * ow + lo;
              for (std::size_t q = 0; q < hi - lo; ++q) orow[q] += wval * irow[q * s];
            }
          }
      }
    }

  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.graph().record("conv2d", std::move(out), {x, w, b}, [=](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& xval = g.value(ix);
    const Tensor& wval_t = g.value(iw);
    const bool need_x = g.requires_grad(ix), need_w = g.requires_grad(iw), need_b = g.requires_grad(ib);
    double* gx = need_x ? g.accumulate(ix).data() : nullptr;
    double* gw = need_w ? g.accumulate(iw).data() : nullptr;
    double* gb = need_b ? g.accumulate(ib).data() : nullptr;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t oi = 0; oi < o; ++oi) {
        const double* gplane = gy.data() + (ni * o + oi) * oh * ow;
        if (gb) {
          double acc = 0.0;
          for (std::size_t q = 0; q < oh * ow; ++q) acc += gplane[q];
          gb[oi] += acc;
        }
        if (!gx && !gw) continue;
        const std::size_t gi = oi / og;
        for (std::size_t ci = 0; ci < cg; ++ci) {
          const std::size_t chan = (ni * c + gi * cg + ci) * h * wd;
          const double* in = xval.data() + chan;
          double* gin = gx ? gx + chan : nullptr;
          const std::size_t kbase = (oi * cg + ci) * kh * kw;
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double wv2 = wval_t[kbase + ky * kw + kx];
              double wacc = 0.0;
              std::size_t lo, hi;
              col_range(kx, lo, hi);
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                const std::size_t rowoff = static_cast<std::size_t>(iy) * wd + lo * s + kx - p;
                const double* grow = gplane + oy * ow + lo;
                if (gw) {
                  const double* irow = in + rowoff;
                  for (std::size_t q = 0; q < hi - lo; ++q) wacc += grow[q] * irow[q * s];
                }
                if (gin) {
                  double* girow = gin + rowoff;
                  for (std::size_t q = 0; q < hi - lo; ++q) girow[q * s] += wv2 * grow[q];
                }
              }
              if (gw) gw[kbase + ky * kw + kx] += wacc;
            }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Deriv>
Var unary(const char* tag, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t ix = x.id();
  return x.graph().record(tag, std::move(out), {x}, [ix, deriv](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& xin = g.value(ix);
    const Tensor& y = g.value(self);
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xin[i], y[i]);
  });
}

}  // namespace detail

inline Var relu(Var x) {
  x.graph().note_kinks(x.value().values());
  return detail::unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var x, double slope) {
  x.graph().note_kinks(x.value().values());
  return detail::unary(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline double sigmoid_value(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline Var sigmoid(Var x) {
  return detail::unary(
      "sigmoid", x, [](double v) { return sigmoid_value(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var scale(Var x, double factor) {
  return detail::unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

inline Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) detail::shape_error("add", av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!g.requires_grad(id)) continue;
      Tensor& gi = g.accumulate(id);
      for (std::size_t i = 0; i < gy.size(); ++i) gi[i] += gy[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) detail::shape_error("mul", av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("mul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& va = g.value(ia);
    const Tensor& vb = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.accumulate(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * vb[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.accumulate(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * va[i];
    }
  });
}

/// Sum of all entries, shape [1].
inline Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  const std::size_t ix = x.id();
  return x.graph().record("sum", Tensor::scalar(acc), {x}, [ix](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

inline Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) detail::shape_error("reshape", x.shape(), shape);
  const std::size_t ix = x.id();
  return x.graph().record("reshape", x.value().reshaped(std::move(shape)), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and structural ops
// ---------------------------------------------------------------------------

/// x[N,C,H,W] -> [N,C], mean over the spatial plane.
inline Var global_average_pool(Var x) {
  const Tensor& xv = x.value();
  detail::require_rank("global_average_pool", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), area = xv.dim(2) * xv.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t q = 0; q < area; ++q) acc += xv[i * area + q];
    out[i] = acc / static_cast<double>(area);
  }
  const std::size_t ix = x.id();
  return x.graph().record("global_average_pool", std::move(out), {x}, [ix, n, c, area](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < n * c; ++i) {
      const double share = gy[i] / static_cast<double>(area);
      for (std::size_t q = 0; q < area; ++q) gx[i * area + q] += share;
    }
  });
}

/// x[n,k] -> [1,k], mean over rows.
inline Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  detail::require_rank("mean_rows", xv, 2);
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor out({1, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += xv[i * k + j];
  for (std::size_t j = 0; j < k; ++j) out[j] /= static_cast<double>(n);
  const std::size_t ix = x.id();
  return x.graph().record("mean_rows", std::move(out), {x}, [ix, n, k](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += gy[j] / static_cast<double>(n);
  });
}

/// Concatenates rank-2 tensors with equal row counts along columns.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const std::size_t n = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require_rank("concat_cols", p.value(), 2);
    if (p.value().dim(0) != n) detail::shape_error("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& v = parts[pi].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(v.data() + i * widths[pi], v.data() + (i + 1) * widths[pi], out.data() + i * total + off);
    off += widths[pi];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].graph().record("concat_cols", std::move(out), parts, [=](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::size_t col = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      if (g.requires_grad(ids[pi])) {
        Tensor& gp = g.accumulate(ids[pi]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[pi]; ++j) gp[i * widths[pi] + j] += gy[i * total + col + j];
      }
      col += widths[pi];
    }
  });
}

/// E[i,j] = s[i] + t[j] for column vectors s[n,1], t[n,1].
inline Var pairwise_sum(Var s, Var t) {
  const Tensor& sv = s.value();
  const Tensor& tv = t.value();
  if (sv.size() != tv.size()) detail::shape_error("pairwise_sum", sv.shape(), tv.shape());
  const std::size_t n = sv.size();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = sv[i] + tv[j];
  const std::size_t is = s.id(), it = t.id();
  return s.graph().record("pairwise_sum", std::move(out), {s, t}, [is, it, n](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(is)) {
      Tensor& gs = g.accumulate(is);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) gs[i] += gy[i * n + j];
    }
    if (g.requires_grad(it)) {
      Tensor& gt = g.accumulate(it);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) gt[j] += gy[i * n + j];
    }
  });
}

/// Row-wise softmax restricted to entries where mask[i*k+j] is set; masked
/// entries are exactly 0. An empty mask means every entry takes part.
inline Var masked_softmax_rows(Var x, std::span<const std::uint8_t> mask = {}) {
  const Tensor& xv = x.value();
  detail::require_rank("softmax", xv, 2);
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  if (!mask.empty() && mask.size() != n * k) throw InvalidInput("softmax: mask size does not match input");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  if (m.empty()) m.assign(n * k, 1);
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j)
      if (m[i * k + j]) mx = std::max(mx, xv[i * k + j]);
    if (mx == -INFINITY) throw InvalidInput("softmax: row " + std::to_string(i) + " has no unmasked entries");
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (m[i * k + j]) z += (out[i * k + j] = std::exp(xv[i * k + j] - mx));
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
  }
  const std::size_t ix = x.id();
  return x.graph().record("softmax", std::move(out), {x}, [ix, n, k](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.accumulate(ix);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += gy[i * k + j] * y[i * k + j];
      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += y[i * k + j] * (gy[i * k + j] - dot);
    }
  });
}

inline Var softmax(Var x) { return masked_softmax_rows(x); }

/// Mean two-or-more-class cross-entropy of logits[n,c] against integer labels.
inline Var cross_entropy_loss(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  detail::require_rank("cross_entropy_loss", lv, 2);
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  if (labels.size() != n) throw InvalidInput("cross_entropy_loss: label count does not match batch size");
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw InvalidInput("cross_entropy_loss: label out of range");
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv[i * c + j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(lv[i * c + j] - log_z);
    loss += log_z - lv[i * c + static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.graph().record(
      "cross_entropy_loss", Tensor::scalar(loss), {logits},
      [il, n, c, probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0] / static_cast<double>(n);
        Tensor& gl = g.accumulate(il);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl[i * c + j] += gy * (probs[i * c + j] - (static_cast<int>(j) == lab[i] ? 1.0 : 0.0));
      });
}

}  // namespace msvl::nn
