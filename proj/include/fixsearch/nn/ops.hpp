#ifndef FIXSEARCH_NN_OPS_HPP
#define FIXSEARCH_NN_OPS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fixsearch/nn/tensor.hpp"

namespace fixsearch::nn {

enum class Padding { Same, Valid };

namespace detail {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b, r = a % b;
  return q + (r > 0 ? 1 : 0);
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b, r = a % b;
  return q - (r != 0 && r < 0 ? 1 : 0);
}

inline void require_4d(const Tensor& t, const char* op) {
  if (t.shape().size() != 4)
    throw ShapeError(std::string(op) + ": expected 4-D (N,C,H,W) tensor, got " + shape_str(t.shape()));
}

struct ConvGeometry {
  std::int64_t n, ci, h, w;       // input
  std::int64_t co, kh, kw;        // kernel
  std::int64_t stride, dilation;
  std::int64_t pad_h, pad_w;      // top/left zero padding
  std::int64_t oh, ow;            // output

  std::int64_t eff_kh() const { return (kh - 1) * dilation + 1; }
  std::int64_t eff_kw() const { return (kw - 1) * dilation + 1; }
};

inline ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, std::int64_t stride,
                                  std::int64_t dilation, Padding padding) {
  ConvGeometry g{};
  g.n = xs[0];
  g.ci = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.co = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.stride = stride;
  g.dilation = dilation;
  if (ws[1] != g.ci)
    throw ShapeError("conv2d: input channels " + shape_str(xs) + " vs weights " + shape_str(ws));
  if (stride < 1 || dilation < 1) throw ShapeError("conv2d: stride and dilation must be >= 1");
  if (padding == Padding::Same) {
    g.oh = ceil_div(g.h, stride);
    g.ow = ceil_div(g.w, stride);
    g.pad_h = std::max<std::int64_t>(0, (g.oh - 1) * stride + g.eff_kh() - g.h) / 2;
    g.pad_w = std::max<std::int64_t>(0, (g.ow - 1) * stride + g.eff_kw() - g.w) / 2;
  } else {
    if (g.h < g.eff_kh() || g.w < g.eff_kw())
      throw ShapeError("conv2d: kernel " + shape_str(ws) + " larger than input " + shape_str(xs) +
                       " under valid padding");
    g.oh = (g.h - g.eff_kh()) / stride + 1;
    g.ow = (g.w - g.eff_kw()) / stride + 1;
    g.pad_h = g.pad_w = 0;
  }
  return g;
}

// Valid output-x range for a kernel column offset: 0 <= ox*stride + off < w.
inline std::pair<std::int64_t, std::int64_t> ox_range(std::int64_t off, std::int64_t stride,
                                                      std::int64_t w, std::int64_t ow) {
  const std::int64_t lo = std::max<std::int64_t>(0, ceil_div(-off, stride));
  const std::int64_t hi = std::min(ow, floor_div(w - off - 1, stride) + 1);
  return {lo, std::max(lo, hi)};
}

inline void conv2d_forward_buf(const double* __restrict__ x, const double* __restrict__ w,
                               const double* __restrict__ bias, double* __restrict__ y,
                               const ConvGeometry& g) {
  const std::int64_t khw = g.kh * g.kw;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.co; ++co) {
      double* yplane = y + (n * g.co + co) * g.oh * g.ow;
      const double b = bias ? bias[co] : 0.0;
      for (std::int64_t i = 0; i < g.oh * g.ow; ++i) yplane[i] = b;
      const double* wbase = w + co * g.ci * khw;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const std::int64_t koff = ky * g.kw + kx;
          const std::int64_t off = kx * g.dilation - g.pad_w;
          const auto [ox0, ox1] = ox_range(off, g.stride, g.w, g.ow);
          for (std::int64_t oy = 0; oy < g.oh; ++oy) {
            const std::int64_t iy = oy * g.stride + ky * g.dilation - g.pad_h;
            if (iy < 0 || iy >= g.h) continue;
            double* yr = yplane + oy * g.ow;
            const double* xrow = x + n * g.ci * g.h * g.w + iy * g.w + off;
            const std::int64_t plane = g.h * g.w;
            std::int64_t ci = 0;
            if (g.stride == 1) {
              // Four input channels per pass amortize the output row's
              // read-modify-write; summation order is fixed.
              for (; ci + 4 <= g.ci; ci += 4) {
                const double* x0 = xrow + ci * plane;
                const double* x1 = xrow + (ci + 1) * plane;
                const double* x2 = xrow + (ci + 2) * plane;
                const double* x3 = xrow + (ci + 3) * plane;
                const double w0 = wbase[ci * khw + koff];
                const double w1 = wbase[(ci + 1) * khw + koff];
                const double w2 = wbase[(ci + 2) * khw + koff];
                const double w3 = wbase[(ci + 3) * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                  yr[ox] += (w0 * x0[ox] + w1 * x1[ox]) + (w2 * x2[ox] + w3 * x3[ox]);
              }
              for (; ci < g.ci; ++ci) {
                const double* xr = xrow + ci * plane;
                const double wv = wbase[ci * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox];
              }
            } else {
              for (; ci < g.ci; ++ci) {
                const double* xr = xrow + ci * plane;
                const double wv = wbase[ci * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

inline void conv2d_backward_input_buf(const double* __restrict__ gy, const double* __restrict__ w,
                                      double* __restrict__ gx, const ConvGeometry& g) {
  const std::int64_t khw = g.kh * g.kw;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t ci = 0; ci < g.ci; ++ci) {
      double* gxplane = gx + (n * g.ci + ci) * g.h * g.w;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const std::int64_t koff = ky * g.kw + kx;
          const std::int64_t off = kx * g.dilation - g.pad_w;
          const auto [ox0, ox1] = ox_range(off, g.stride, g.w, g.ow);
          for (std::int64_t oy = 0; oy < g.oh; ++oy) {
            const std::int64_t iy = oy * g.stride + ky * g.dilation - g.pad_h;
            if (iy < 0 || iy >= g.h) continue;
            double* gxr = gxplane + iy * g.w + off;
            const double* gyrow = gy + n * g.co * g.oh * g.ow + oy * g.ow;
            const std::int64_t plane = g.oh * g.ow;
            std::int64_t co = 0;
            if (g.stride == 1) {
              for (; co + 4 <= g.co; co += 4) {
                const double* g0 = gyrow + co * plane;
                const double* g1 = gyrow + (co + 1) * plane;
                const double* g2 = gyrow + (co + 2) * plane;
                const double* g3 = gyrow + (co + 3) * plane;
                const double w0 = w[(co * g.ci + ci) * khw + koff];
                const double w1 = w[((co + 1) * g.ci + ci) * khw + koff];
                const double w2 = w[((co + 2) * g.ci + ci) * khw + koff];
                const double w3 = w[((co + 3) * g.ci + ci) * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                  gxr[ox] += (w0 * g0[ox] + w1 * g1[ox]) + (w2 * g2[ox] + w3 * g3[ox]);
              }
              for (; co < g.co; ++co) {
                const double* gyr = gyrow + co * plane;
                const double wv = w[(co * g.ci + ci) * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox) gxr[ox] += wv * gyr[ox];
              }
            } else {
              for (; co < g.co; ++co) {
                const double* gyr = gyrow + co * plane;
                const double wv = w[(co * g.ci + ci) * khw + koff];
                for (std::int64_t ox = ox0; ox < ox1; ++ox) gxr[ox * g.stride] += wv * gyr[ox];
              }
            }
          }
        }
      }
    }
  }
}

inline void conv2d_backward_weights_buf(const double* __restrict__ x, const double* __restrict__ gy,
                                        double* __restrict__ gw, double* __restrict__ gb,
                                        const ConvGeometry& g) {
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.co; ++co) {
      const double* gyplane = gy + (n * g.co + co) * g.oh * g.ow;
      if (gb) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < g.oh * g.ow; ++i) acc += gyplane[i];
        gb[co] += acc;
      }
      if (!gw) continue;
      for (std::int64_t ci = 0; ci < g.ci; ++ci) {
        const double* xplane = x + (n * g.ci + ci) * g.h * g.w;
        double* gwrow = gw + ((co * g.ci + ci) * g.kh) * g.kw;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const std::int64_t off = kx * g.dilation - g.pad_w;
            const auto [ox0, ox1] = ox_range(off, g.stride, g.w, g.ow);
            // Four accumulators break the FP dependency chain of the row dot
            // product; the summation order is fixed, so results stay
            // deterministic.
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.stride + ky * g.dilation - g.pad_h;
              if (iy < 0 || iy >= g.h) continue;
              const double* xr = xplane + iy * g.w + off;
              const double* gyr = gyplane + oy * g.ow;
              std::int64_t ox = ox0;
              if (g.stride == 1) {
                for (; ox + 4 <= ox1; ox += 4) {
                  a0 += gyr[ox] * xr[ox];
                  a1 += gyr[ox + 1] * xr[ox + 1];
                  a2 += gyr[ox + 2] * xr[ox + 2];
                  a3 += gyr[ox + 3] * xr[ox + 3];
                }
                for (; ox < ox1; ++ox) a0 += gyr[ox] * xr[ox];
              } else {
                for (; ox < ox1; ++ox) a0 += gyr[ox] * xr[ox * g.stride];
              }
            }
            gwrow[ky * g.kw + kx] += (a0 + a1) + (a2 + a3);
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul, Div };

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape())
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not match");
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::int64_t n = std::max(a.numel(), b.numel());
  const double* pa = a.data();
  const double* pb = b.data();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double va = pa[a_scalar ? 0 : i];
    const double vb = pb[b_scalar ? 0 : i];
    switch (op) {
      case BinOp::Add: out[i] = va + vb; break;
      case BinOp::Sub: out[i] = va - vb; break;
      case BinOp::Mul: out[i] = va * vb; break;
      case BinOp::Div: out[i] = va / vb; break;
    }
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor::make_op(out_shape, std::move(out), {an, bn},
                         [an = an.get(), bn = bn.get(), op, a_scalar, b_scalar, n](detail::Node& self) {
    const double* gy = self.grad.data();
    const double* pa = an->values.data();
    const double* pb = bn->values.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* ga = an->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const double vb = pb[b_scalar ? 0 : i];
        double g;
        switch (op) {
          case BinOp::Add: g = gy[i]; break;
          case BinOp::Sub: g = gy[i]; break;
          case BinOp::Mul: g = gy[i] * vb; break;
          case BinOp::Div: g = gy[i] / vb; break;
        }
        ga[a_scalar ? 0 : i] += g;
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* gb = bn->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const double va = pa[a_scalar ? 0 : i];
        const double vb = pb[b_scalar ? 0 : i];
        double g;
        switch (op) {
          case BinOp::Add: g = gy[i]; break;
          case BinOp::Sub: g = -gy[i]; break;
          case BinOp::Mul: g = gy[i] * va; break;
          case BinOp::Div: g = -gy[i] * va / (vb * vb); break;
        }
        gb[b_scalar ? 0 : i] += g;
      }
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Mul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Div, "div"); }

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v += c;
  auto an = a.node_ptr();
  return Tensor::make_op(a.shape(), std::move(out), {an}, [an = an.get()](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  auto an = a.node_ptr();
  return Tensor::make_op(a.shape(), std::move(out), {an}, [an = an.get(), c](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto an = a.node_ptr();
  return Tensor::make_op(a.shape(), std::move(out), {an}, [an = an.get()](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (an->values[i] > 0.0) an->grad[i] += self.grad[i];
  });
}

/// Natural logarithm, elementwise.
inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::log(v);
  auto an = a.node_ptr();
  return Tensor::make_op(a.shape(), std::move(out), {an}, [an = an.get()](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / an->values[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  auto an = a.node_ptr();
  return Tensor::make_op({1}, {total}, {an}, [an = an.get()](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (double& gv : an->grad) gv += g;
  });
}

namespace detail {

inline Tensor reduce_extremum(const Tensor& a, bool take_max, const char* name) {
  const auto& v = a.values();
  if (v.empty()) throw ShapeError(std::string(name) + ": empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (take_max ? v[i] > v[arg] : v[i] < v[arg]) arg = i;  // first extremum wins ties
  auto an = a.node_ptr();
  return Tensor::make_op({1}, {v[arg]}, {an}, [an = an.get(), arg](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad[arg] += self.grad[0];
  });
}

}  // namespace detail

/// Grid minimum/maximum as a scalar; gradient routes to the first extremum in
/// scan order.
inline Tensor reduce_min(const Tensor& a) { return detail::reduce_extremum(a, false, "reduce_min"); }
inline Tensor reduce_max(const Tensor& a) { return detail::reduce_extremum(a, true, "reduce_max"); }

/// Per-channel global spatial mean: (N,C,H,W) -> (N,C,1,1).
inline Tensor mean_spatial(const Tensor& a) {
  detail::require_4d(a, "mean_spatial");
  const auto& s = a.shape();
  const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  std::vector<double> out(static_cast<std::size_t>(n * c));
  const double* x = a.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t k = 0; k < hw; ++k) acc += x[i * hw + k];
    out[i] = acc / static_cast<double>(hw);
  }
  auto an = a.node_ptr();
  return Tensor::make_op({n, c, 1, 1}, std::move(out), {an}, [an = an.get(), hw](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i] * inv;
      for (std::int64_t k = 0; k < hw; ++k) an->grad[i * hw + k] += g;
    }
  });
}

/// Broadcasts (N,C,1,1) over a spatial extent: the ASPP global-context branch.
inline Tensor broadcast_spatial(const Tensor& a, std::int64_t h, std::int64_t w) {
  detail::require_4d(a, "broadcast_spatial");
  const auto& s = a.shape();
  if (s[2] != 1 || s[3] != 1)
    throw ShapeError("broadcast_spatial: expected (N,C,1,1), got " + shape_str(s));
  const std::int64_t n = s[0], c = s[1], hw = h * w;
  std::vector<double> out(static_cast<std::size_t>(n * c * hw));
  const double* x = a.data();
  for (std::int64_t i = 0; i < n * c; ++i)
    for (std::int64_t k = 0; k < hw; ++k) out[i * hw + k] = x[i];
  auto an = a.node_ptr();
  return Tensor::make_op({n, c, h, w}, std::move(out), {an}, [an = an.get(), hw](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < an->grad.size(); ++i) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < hw; ++k) acc += self.grad[i * hw + k];
      an->grad[i] += acc;
    }
  });
}

/// Concatenates 4-D tensors along the channel axis.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& p : parts) detail::require_4d(p, "concat_channels");
  const std::int64_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::int64_t c_total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
      throw ShapeError("concat_channels: incompatible shape " + shape_str(p.shape()));
    c_total += p.dim(1);
  }
  const std::int64_t hw = h * w;
  std::vector<double> out(static_cast<std::size_t>(n * c_total * hw));
  std::vector<std::shared_ptr<detail::Node>> parents;
  std::vector<std::int64_t> channels;
  for (const auto& p : parts) {
    parents.push_back(p.node_ptr());
    channels.push_back(p.dim(1));
  }
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t c_off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::int64_t c = channels[pi];
      const double* src = parts[pi].data() + b * c * hw;
      double* dst = out.data() + (b * c_total + c_off) * hw;
      std::copy(src, src + c * hw, dst);
      c_off += c;
    }
  }
  std::vector<detail::Node*> raw;
  for (auto& p : parents) raw.push_back(p.get());
  return Tensor::make_op({n, c_total, h, w}, std::move(out), parents,
                         [raw, channels, n, hw, c_total](detail::Node& self) {
    for (std::int64_t b = 0; b < n; ++b) {
      std::int64_t c_off = 0;
      for (std::size_t pi = 0; pi < raw.size(); ++pi) {
        const std::int64_t c = channels[pi];
        if (raw[pi]->requires_grad) {
          raw[pi]->ensure_grad();
          const double* gsrc = self.grad.data() + (b * c_total + c_off) * hw;
          double* gdst = raw[pi]->grad.data() + b * c * hw;
          for (std::int64_t i = 0; i < c * hw; ++i) gdst[i] += gsrc[i];
        }
        c_off += c;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2-D cross-correlation (the deep-learning convention) with dilation and
/// zero padding. weights: (Co,Ci,Kh,Kw); bias: (Co) or an undefined Tensor.
/// Same-padding at stride 1 preserves the spatial dims.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::int64_t stride = 1,
                     std::int64_t dilation = 1, Padding padding = Padding::Same) {
  detail::require_4d(x, "conv2d");
  detail::require_4d(w, "conv2d(weights)");
  const auto g = detail::conv_geometry(x.shape(), w.shape(), stride, dilation, padding);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.co)
    throw ShapeError("conv2d: bias size " + std::to_string(bias.numel()) + " vs out channels " +
                     std::to_string(g.co));

  std::vector<double> out(static_cast<std::size_t>(g.n * g.co * g.oh * g.ow));
  detail::conv2d_forward_buf(x.data(), w.data(), has_bias ? bias.data() : nullptr, out.data(), g);

  std::vector<std::shared_ptr<detail::Node>> parents = {x.node_ptr(), w.node_ptr()};
  if (has_bias) parents.push_back(bias.node_ptr());
  auto xn = x.node_ptr().get();
  auto wn = w.node_ptr().get();
  auto bn = has_bias ? bias.node_ptr().get() : nullptr;
  return Tensor::make_op({g.n, g.co, g.oh, g.ow}, std::move(out), std::move(parents),
                         [xn, wn, bn, g](detail::Node& self) {
    const double* gy = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      detail::conv2d_backward_input_buf(gy, wn->values.data(), xn->grad.data(), g);
    }
    const bool need_w = wn->requires_grad;
    const bool need_b = bn && bn->requires_grad;
    if (need_w || need_b) {
      if (need_w) wn->ensure_grad();
      if (need_b) bn->ensure_grad();
      detail::conv2d_backward_weights_buf(xn->values.data(), gy,
                                          need_w ? wn->grad.data() : nullptr,
                                          need_b ? bn->grad.data() : nullptr, g);
    }
  });
}

/// Channel-wise cross-correlation: channel c of the filter slides over
/// channel c of the input, stride 1, zero same-padding, no nonlinearity.
/// x: (1,C,H,W), filt: (1,C,Kh,Kw) -> (1,C,H,W). This is the cross-stream
/// convolution with the target features treated as the filter.
inline Tensor depthwise_xcorr2d(const Tensor& x, const Tensor& filt) {
  detail::require_4d(x, "depthwise_xcorr2d");
  detail::require_4d(filt, "depthwise_xcorr2d(filter)");
  if (x.dim(0) != 1 || filt.dim(0) != 1)
    throw ShapeError("depthwise_xcorr2d: batch must be 1");
  if (x.dim(1) != filt.dim(1))
    throw ShapeError("depthwise_xcorr2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(filt.shape()));
  const std::int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t kh = filt.dim(2), kw = filt.dim(3);
  if (kh > h || kw > w)
    throw ShapeError("depthwise_xcorr2d: filter " + shape_str(filt.shape()) +
                     " exceeds input extent " + shape_str(x.shape()));
  const std::int64_t pad_h = (kh - 1) / 2, pad_w = (kw - 1) / 2;

  std::vector<double> out(static_cast<std::size_t>(c * h * w), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* xp = x.data() + ch * h * w;
    const double* fp = filt.data() + ch * kh * kw;
    double* yp = out.data() + ch * h * w;
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        const double fv = fp[ky * kw + kx];
        const std::int64_t off = kx - pad_w;
        const std::int64_t ox0 = std::max<std::int64_t>(0, -off);
        const std::int64_t ox1 = std::min(w, w - off);
        for (std::int64_t oy = 0; oy < h; ++oy) {
          const std::int64_t iy = oy + ky - pad_h;
          if (iy < 0 || iy >= h) continue;
          const double* xr = xp + iy * w + off;
          double* yr = yp + oy * w;
          for (std::int64_t ox = ox0; ox < ox1; ++ox) yr[ox] += fv * xr[ox];
        }
      }
    }
  }
  auto xn = x.node_ptr();
  auto fn = filt.node_ptr();
  return Tensor::make_op({1, c, h, w}, std::move(out), {xn, fn},
                         [xn = xn.get(), fn = fn.get(), c, h, w, kh, kw, pad_h, pad_w](detail::Node& self) {
    const double* gy = self.grad.data();
    if (xn->requires_grad) xn->ensure_grad();
    if (fn->requires_grad) fn->ensure_grad();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* xp = xn->values.data() + ch * h * w;
      const double* fp = fn->values.data() + ch * kh * kw;
      const double* gyp = gy + ch * h * w;
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const double fv = fp[ky * kw + kx];
          const std::int64_t off = kx - pad_w;
          const std::int64_t ox0 = std::max<std::int64_t>(0, -off);
          const std::int64_t ox1 = std::min(w, w - off);
          double facc = 0.0;
          for (std::int64_t oy = 0; oy < h; ++oy) {
            const std::int64_t iy = oy + ky - pad_h;
            if (iy < 0 || iy >= h) continue;
            const double* gyr = gyp + oy * w;
            if (xn->requires_grad) {
              double* gxr = xn->grad.data() + ch * h * w + iy * w + off;
              for (std::int64_t ox = ox0; ox < ox1; ++ox) gxr[ox] += fv * gyr[ox];
            }
            if (fn->requires_grad) {
              const double* xr = xp + iy * w + off;
              for (std::int64_t ox = ox0; ox < ox1; ++ox) facc += gyr[ox] * xr[ox];
            }
          }
          if (fn->requires_grad) fn->grad[ch * kh * kw + ky * kw + kx] += facc;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Max pooling with a square window. Same-padding pads with -inf; the
/// gradient routes to the first maximum in window scan order on ties.
/// Stride 1 with same padding realizes the removed-stride pooling layers.
inline Tensor max_pool2d(const Tensor& x, std::int64_t window, std::int64_t stride,
                         Padding padding = Padding::Valid) {
  detail::require_4d(x, "max_pool2d");
  if (window < 1 || stride < 1) throw ShapeError("max_pool2d: window and stride must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::int64_t oh, ow, pad_h, pad_w;
  if (padding == Padding::Same) {
    oh = detail::ceil_div(h, stride);
    ow = detail::ceil_div(w, stride);
    pad_h = std::max<std::int64_t>(0, (oh - 1) * stride + window - h) / 2;
    pad_w = std::max<std::int64_t>(0, (ow - 1) * stride + window - w) / 2;
  } else {
    if (window > h || window > w)
      throw ShapeError("max_pool2d: window " + std::to_string(window) + " larger than input " +
                       shape_str(x.shape()));
    oh = (h - window) / stride + 1;
    ow = (w - window) / stride + 1;
    pad_h = pad_w = 0;
  }

  std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
  std::vector<std::int64_t> argmax(out.size());
  const double* xp = x.data();
  std::size_t oi = 0;
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const double* xplane = xp + plane * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t ky = 0; ky < window; ++ky) {
          const std::int64_t iy = oy * stride + ky - pad_h;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < window; ++kx) {
            const std::int64_t ix = ox * stride + kx - pad_w;
            if (ix < 0 || ix >= w) continue;
            const double v = xplane[iy * w + ix];
            if (v > best) {
              best = v;
              best_idx = plane * h * w + iy * w + ix;
            }
          }
        }
        if (best_idx < 0) throw ShapeError("max_pool2d: window fell entirely outside the input");
        out[oi] = best;
        argmax[oi] = best_idx;
      }
    }
  }
  auto xnp = x.node_ptr();
  return Tensor::make_op({n, c, oh, ow}, std::move(out), {xnp},
                         [xn = xnp.get(), argmax = std::move(argmax)](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[argmax[i]] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Bilinear upsampling (factor 2, align_corners = false)
// ---------------------------------------------------------------------------

namespace detail {

struct LerpTap {
  std::int64_t i0, i1;
  double w1;  // weight of i1; i0 gets (1 - w1)
};

inline std::vector<LerpTap> upsample2_taps(std::int64_t in_extent, std::int64_t factor) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in_extent * factor));
  for (std::int64_t o = 0; o < in_extent * factor; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(src));
    double w1 = src - static_cast<double>(i0);
    std::int64_t i1 = i0 + 1;
    i0 = std::clamp<std::int64_t>(i0, 0, in_extent - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, in_extent - 1);
    taps[o] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace detail

/// Scales both spatial extents by bilinear interpolation (align corners
/// false); the backward pass is the exact adjoint (scatter of the
/// interpolation weights). The architecture uses factor 2; the one-shot x8
/// variant exists for the decoder-removal ablation.
inline Tensor bilinear_upsample2d(const Tensor& x, std::int64_t factor = 2) {
  detail::require_4d(x, "bilinear_upsample2d");
  if (factor < 2) throw ShapeError("bilinear_upsample2d: factor must be >= 2");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h * factor, ow = w * factor;
  const auto ytaps = detail::upsample2_taps(h, factor);
  const auto xtaps = detail::upsample2_taps(w, factor);

  std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
  const double* xp = x.data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const double* src = xp + plane * h * w;
    double* dst = out.data() + plane * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      const auto& ty = ytaps[oy];
      const double* r0 = src + ty.i0 * w;
      const double* r1 = src + ty.i1 * w;
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const auto& tx = xtaps[ox];
        const double top = r0[tx.i0] * (1.0 - tx.w1) + r0[tx.i1] * tx.w1;
        const double bot = r1[tx.i0] * (1.0 - tx.w1) + r1[tx.i1] * tx.w1;
        dst[oy * ow + ox] = top * (1.0 - ty.w1) + bot * ty.w1;
      }
    }
  }
  auto xnp = x.node_ptr();
  return Tensor::make_op({n, c, oh, ow}, std::move(out), {xnp},
                         [xn = xnp.get(), ytaps, xtaps, n, c, h, w, oh, ow](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      double* gsrc = xn->grad.data() + plane * h * w;
      const double* gdst = self.grad.data() + plane * oh * ow;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const auto& ty = ytaps[oy];
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const auto& tx = xtaps[ox];
          const double g = gdst[oy * ow + ox];
          gsrc[ty.i0 * w + tx.i0] += g * (1.0 - ty.w1) * (1.0 - tx.w1);
          gsrc[ty.i0 * w + tx.i1] += g * (1.0 - ty.w1) * tx.w1;
          gsrc[ty.i1 * w + tx.i0] += g * ty.w1 * (1.0 - tx.w1);
          gsrc[ty.i1 * w + tx.i1] += g * ty.w1 * tx.w1;
        }
      }
    }
  });
}

}  // namespace fixsearch::nn

#endif  // FIXSEARCH_NN_OPS_HPP
