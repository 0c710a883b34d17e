#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "invshape/core/node.hpp"

// Differentiable primitives. Images are stored H x W x C, convolution kernels
// k x k x Cin x Cout, dense weights m x n. Scalars have shape [1].
namespace invshape::ops {

namespace detail {

using invshape::detail::NodeData;

inline bool wants(const NodeData& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

inline Array& grad_of(NodeData& self, std::size_t i) {
  return self.parents[i]->grad_buffer();
}

inline const Array& value_of(const NodeData& self, std::size_t i) {
  return self.parents[i]->value;
}

inline void require_rank(const Node& n, std::size_t rank, const char* op,
                         const char* what) {
  if (n.shape().size() != rank)
    fail<ShapeError>(op, ": ", what, " must have rank ", rank, ", got ",
                     shape_str(n.shape()));
}

inline void require_same_shape(const Node& a, const Node& b, const char* op) {
  if (a.shape() != b.shape())
    fail<ShapeError>(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                     shape_str(b.shape()));
}

}  // namespace detail

/// Cross-correlation with zero padding.
inline Node conv2d(const Node& input, const Node& kernel, const Node& bias,
                   std::size_t stride, std::size_t pad) {
  detail::require_rank(input, 3, "conv2d", "input");
  detail::require_rank(kernel, 4, "conv2d", "kernel");
  const std::size_t H = input.shape()[0], W = input.shape()[1],
                    cin = input.shape()[2];
  const std::size_t k = kernel.shape()[0];
  const std::size_t cout = kernel.shape()[3];
  if (kernel.shape()[1] != k || k == 0)
    fail<ShapeError>("conv2d: kernel must be square, got ",
                     shape_str(kernel.shape()));
  if (kernel.shape()[2] != cin)
    fail<ShapeError>("conv2d: input has ", cin, " channels but kernel ",
                     shape_str(kernel.shape()), " expects ", kernel.shape()[2]);
  if (bias.shape() != Shape{cout})
    fail<ShapeError>("conv2d: bias shape ", shape_str(bias.shape()),
                     " does not match Cout=", cout);
  if (stride == 0) fail<ShapeError>("conv2d: stride must be >= 1");
  if (H + 2 * pad < k || W + 2 * pad < k)
    fail<ShapeError>("conv2d: kernel ", k, " larger than padded input ",
                     shape_str(input.shape()));
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;

  const Array& x = input.value();
  const Array& w = kernel.value();
  const Array& b = bias.value();
  Array out({Ho, Wo, cout});
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      double* o = out.raw() + (oy * Wo + ox) * cout;
      for (std::size_t co = 0; co < cout; ++co) o[co] = b[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const double* xi = x.raw() + (iy * W + ix) * cin;
          const double* wk = w.raw() + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = xi[ci];
            const double* wr = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
      }
    }

  return Node::make(std::move(out), {input, kernel, bias}, [=](detail::NodeData& self) {
    const Array& g = self.grad;
    const Array& xv = detail::value_of(self, 0);
    const Array& wv = detail::value_of(self, 1);
    if (detail::wants(self, 2)) {
      Array& gb = detail::grad_of(self, 2);
      for (std::size_t p = 0; p < Ho * Wo; ++p)
        for (std::size_t co = 0; co < cout; ++co) gb[co] += g[p * cout + co];
    }
    const bool need_x = detail::wants(self, 0);
    const bool need_w = detail::wants(self, 1);
    if (!need_x && !need_w) return;
    // Kernel transposed to k x k x Cout x Cin so the input-gradient inner
    // loop runs over contiguous Cin.
    Array wt;
    if (need_x) {
      wt = Array({k, k, cout, cin});
      for (std::size_t t = 0; t < k * k; ++t)
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t co = 0; co < cout; ++co)
            wt[(t * cout + co) * cin + ci] = wv[(t * cin + ci) * cout + co];
    }
    double* gx = need_x ? detail::grad_of(self, 0).raw() : nullptr;
    double* gw = need_w ? detail::grad_of(self, 1).raw() : nullptr;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const double* go = g.raw() + (oy * Wo + ox) * cout;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const std::size_t t = ky * k + kx;
            const std::size_t xoff = (iy * W + ix) * cin;
            if (need_w) {
              const double* xi = xv.raw() + xoff;
              double* gwk = gw + t * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double a = xi[ci];
                double* gr = gwk + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) gr[co] += a * go[co];
              }
            }
            if (need_x) {
              double* gxi = gx + xoff;
              const double* wtk = wt.raw() + t * cout * cin;
              for (std::size_t co = 0; co < cout; ++co) {
                const double gc = go[co];
                const double* wr = wtk + co * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) gxi[ci] += gc * wr[ci];
              }
            }
          }
        }
      }
  });
}

/// Transposed convolution with a 2x2 kernel and stride 2 (no padding): each
/// input pixel scatters into a disjoint 2x2 output block, doubling H and W.
inline Node conv_transpose2d(const Node& input, const Node& kernel,
                             const Node& bias, std::size_t stride = 2) {
  detail::require_rank(input, 3, "conv_transpose2d", "input");
  detail::require_rank(kernel, 4, "conv_transpose2d", "kernel");
  if (stride != 2 || kernel.shape()[0] != 2 || kernel.shape()[1] != 2)
    fail<ShapeError>("conv_transpose2d: only kernel 2x2 with stride 2 doubles "
                     "the spatial size; got kernel ",
                     shape_str(kernel.shape()), " stride ", stride);
  const std::size_t H = input.shape()[0], W = input.shape()[1],
                    cin = input.shape()[2];
  if (kernel.shape()[2] != cin)
    fail<ShapeError>("conv_transpose2d: input has ", cin,
                     " channels but kernel expects ", kernel.shape()[2]);
  const std::size_t cout = kernel.shape()[3];
  if (bias.shape() != Shape{cout})
    fail<ShapeError>("conv_transpose2d: bias shape ", shape_str(bias.shape()),
                     " does not match Cout=", cout);
  const std::size_t Ho = 2 * H, Wo = 2 * W;
  const Array& x = input.value();
  const Array& w = kernel.value();
  const Array& b = bias.value();
  Array out({Ho, Wo, cout});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t xx = 0; xx < W; ++xx) {
      const double* xi = x.raw() + (y * W + xx) * cin;
      for (std::size_t ky = 0; ky < 2; ++ky)
        for (std::size_t kx = 0; kx < 2; ++kx) {
          double* o = out.raw() + ((2 * y + ky) * Wo + 2 * xx + kx) * cout;
          for (std::size_t co = 0; co < cout; ++co) o[co] = b[co];
          const double* wk = w.raw() + (ky * 2 + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = xi[ci];
            const double* wr = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
    }

  return Node::make(std::move(out), {input, kernel, bias}, [=](detail::NodeData& self) {
    const Array& g = self.grad;
    const Array& xv = detail::value_of(self, 0);
    const Array& wv = detail::value_of(self, 1);
    if (detail::wants(self, 2)) {
      Array& gb = detail::grad_of(self, 2);
      for (std::size_t p = 0; p < Ho * Wo; ++p)
        for (std::size_t co = 0; co < cout; ++co) gb[co] += g[p * cout + co];
    }
    const bool need_x = detail::wants(self, 0);
    const bool need_w = detail::wants(self, 1);
    if (!need_x && !need_w) return;
    double* gx = need_x ? detail::grad_of(self, 0).raw() : nullptr;
    double* gw = need_w ? detail::grad_of(self, 1).raw() : nullptr;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        const std::size_t xoff = (y * W + xx) * cin;
        for (std::size_t ky = 0; ky < 2; ++ky)
          for (std::size_t kx = 0; kx < 2; ++kx) {
            const double* go = g.raw() + ((2 * y + ky) * Wo + 2 * xx + kx) * cout;
            const std::size_t woff = (ky * 2 + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* wr = wv.raw() + woff + ci * cout;
              if (need_x) {
                double acc = 0.0;
                for (std::size_t co = 0; co < cout; ++co) acc += go[co] * wr[co];
                gx[xoff + ci] += acc;
              }
              if (need_w) {
                const double a = xv[xoff + ci];
                double* gr = gw + woff + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) gr[co] += a * go[co];
              }
            }
          }
      }
  });
}

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major
/// order of the window.
inline Node maxpool2(const Node& input) {
  detail::require_rank(input, 3, "maxpool2", "input");
  const std::size_t H = input.shape()[0], W = input.shape()[1],
                    C = input.shape()[2];
  if (H % 2 != 0 || W % 2 != 0)
    fail<ShapeError>("maxpool2: spatial dims must be even, got ",
                     shape_str(input.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  const Array& x = input.value();
  Array out({Ho, Wo, C});
  std::vector<std::size_t> argmax(Ho * Wo * C);
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((2 * oy) * W + 2 * ox) * C + c;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * oy + dy) * W + 2 * ox + dx) * C + c;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (oy * Wo + ox) * C + c;
        out[o] = x[best];
        argmax[o] = best;
      }
  return Node::make(std::move(out), {input},
                    [argmax = std::move(argmax)](detail::NodeData& self) {
                      Array& gx = detail::grad_of(self, 0);
                      for (std::size_t o = 0; o < argmax.size(); ++o)
                        gx[argmax[o]] += self.grad[o];
                    });
}

inline Node leaky_relu(const Node& input, double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    fail<ConfigError>("leaky_relu: slope must lie in (0,1), got ", slope);
  const Array& x = input.value();
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  return Node::make(std::move(out), {input}, [slope](detail::NodeData& self) {
    const Array& xv = detail::value_of(self, 0);
    Array& gx = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i)
      gx[i] += xv[i] >= 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

inline Node tanh_act(const Node& input) {
  const Array& x = input.value();
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return Node::make(out, {input}, [out](detail::NodeData& self) {
    Array& gx = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < out.size(); ++i)
      gx[i] += self.grad[i] * (1.0 - out[i] * out[i]);
  });
}

/// weight (m x n) * input (flattened to n) + bias (m).
inline Node linear(const Node& input, const Node& weight, const Node& bias) {
  detail::require_rank(weight, 2, "linear", "weight");
  const std::size_t m = weight.shape()[0], n = weight.shape()[1];
  if (input.size() != n)
    fail<ShapeError>("linear: input has ", input.size(), " features, weight ",
                     shape_str(weight.shape()), " expects ", n);
  if (bias.shape() != Shape{m})
    fail<ShapeError>("linear: bias shape ", shape_str(bias.shape()),
                     " does not match ", m, " outputs");
  const Array& x = input.value();
  const Array& w = weight.value();
  Array out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias.value()[r];
    const double* wr = w.raw() + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
  return Node::make(std::move(out), {input, weight, bias}, [m, n](detail::NodeData& self) {
    const Array& g = self.grad;
    if (detail::wants(self, 2)) {
      Array& gb = detail::grad_of(self, 2);
      for (std::size_t r = 0; r < m; ++r) gb[r] += g[r];
    }
    if (detail::wants(self, 1)) {
      const Array& xv = detail::value_of(self, 0);
      Array& gw = detail::grad_of(self, 1);
      for (std::size_t r = 0; r < m; ++r) {
        double* gr = gw.raw() + r * n;
        for (std::size_t c = 0; c < n; ++c) gr[c] += g[r] * xv[c];
      }
    }
    if (detail::wants(self, 0)) {
      const Array& wv = detail::value_of(self, 1);
      Array& gx = detail::grad_of(self, 0);
      for (std::size_t r = 0; r < m; ++r) {
        const double* wr = wv.raw() + r * n;
        for (std::size_t c = 0; c < n; ++c) gx[c] += g[r] * wr[c];
      }
    }
  });
}

inline Node concat_channels(const Node& a, const Node& b) {
  detail::require_rank(a, 3, "concat_channels", "first operand");
  detail::require_rank(b, 3, "concat_channels", "second operand");
  if (a.shape()[0] != b.shape()[0] || a.shape()[1] != b.shape()[1])
    fail<ShapeError>("concat_channels: spatial mismatch ", shape_str(a.shape()),
                     " vs ", shape_str(b.shape()));
  const std::size_t P = a.shape()[0] * a.shape()[1];
  const std::size_t ca = a.shape()[2], cb = b.shape()[2], c = ca + cb;
  Array out({a.shape()[0], a.shape()[1], c});
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t i = 0; i < ca; ++i) out[p * c + i] = a.value()[p * ca + i];
    for (std::size_t i = 0; i < cb; ++i) out[p * c + ca + i] = b.value()[p * cb + i];
  }
  return Node::make(std::move(out), {a, b}, [=](detail::NodeData& self) {
    const Array& g = self.grad;
    if (detail::wants(self, 0)) {
      Array& ga = detail::grad_of(self, 0);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t i = 0; i < ca; ++i) ga[p * ca + i] += g[p * c + i];
    }
    if (detail::wants(self, 1) && cb > 0) {
      Array& gb = detail::grad_of(self, 1);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t i = 0; i < cb; ++i) gb[p * cb + i] += g[p * c + ca + i];
    }
  });
}

inline Node reshape(const Node& input, Shape shape) {
  if (shape_numel(shape) != input.size())
    fail<ShapeError>("reshape: cannot view ", shape_str(input.shape()), " as ",
                     shape_str(shape));
  return Node::make(input.value().reshaped(std::move(shape)), {input},
                    [](detail::NodeData& self) {
                      Array& gx = detail::grad_of(self, 0);
                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                    });
}

// ---------------------------------------------------------------------------
// Elementwise and reduction helpers used by the losses.

inline Node add(const Node& a, const Node& b) {
  detail::require_same_shape(a, b, "add");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Node::make(std::move(out), {a, b}, [](detail::NodeData& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (detail::wants(self, p)) {
        Array& g = detail::grad_of(self, p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

inline Node sub(const Node& a, const Node& b) {
  detail::require_same_shape(a, b, "sub");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return Node::make(std::move(out), {a, b}, [](detail::NodeData& self) {
    if (detail::wants(self, 0)) {
      Array& g = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (detail::wants(self, 1)) {
      Array& g = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Node mul(const Node& a, const Node& b) {
  detail::require_same_shape(a, b, "mul");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return Node::make(std::move(out), {a, b}, [](detail::NodeData& self) {
    const Array& av = detail::value_of(self, 0);
    const Array& bv = detail::value_of(self, 1);
    if (detail::wants(self, 0)) {
      Array& g = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (detail::wants(self, 1)) {
      Array& g = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

/// Scalar quotient a / b.
inline Node divide(const Node& a, const Node& b) {
  if (a.size() != 1 || b.size() != 1)
    fail<ShapeError>("divide: operands must be scalars, got ",
                     shape_str(a.shape()), " and ", shape_str(b.shape()));
  const double q = a.value()[0] / b.value()[0];
  return Node::make(Array::scalar(q), {a, b}, [](detail::NodeData& self) {
    const double av = detail::value_of(self, 0)[0];
    const double bv = detail::value_of(self, 1)[0];
    const double g = self.grad[0];
    if (detail::wants(self, 0)) detail::grad_of(self, 0)[0] += g / bv;
    if (detail::wants(self, 1)) detail::grad_of(self, 1)[0] -= g * av / (bv * bv);
  });
}

inline Node scale(const Node& a, double factor) {
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.value()[i];
  return Node::make(std::move(out), {a}, [factor](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

inline Node add_scalar(const Node& a, double offset) {
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + offset;
  return Node::make(std::move(out), {a}, [](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Node square(const Node& a) {
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * a.value()[i];
  return Node::make(std::move(out), {a}, [](detail::NodeData& self) {
    const Array& av = detail::value_of(self, 0);
    Array& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * av[i] * self.grad[i];
  });
}

inline Node sum(const Node& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Node::make(Array::scalar(s), {a}, [](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

/// Σ weights[i] * a[i] with constant weights of the same shape.
inline Node weighted_sum(const Node& a, const Array& weights) {
  if (weights.shape() != a.shape())
    fail<ShapeError>("weighted_sum: weights ", shape_str(weights.shape()),
                     " vs operand ", shape_str(a.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.value()[i];
  return Node::make(Array::scalar(s), {a}, [weights](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * weights[i];
  });
}

/// (1/beta) log Σ w[i] exp(beta * coord[i]) for nonnegative weights w.
/// A smooth upper bound of max{coord[i] : w[i] > 0}.
inline Node weighted_logsumexp(const Node& w, const Array& coord, double beta) {
  if (coord.shape() != w.shape())
    fail<ShapeError>("weighted_logsumexp: coordinates ", shape_str(coord.shape()),
                     " vs weights ", shape_str(w.shape()));
  if (!(beta > 0.0)) fail<ConfigError>("weighted_logsumexp: beta must be > 0");
  const Array& wv = w.value();
  double shift = -INFINITY;
  for (std::size_t i = 0; i < wv.size(); ++i)
    if (wv[i] > 0.0) shift = std::max(shift, coord[i]);
  if (!std::isfinite(shift))
    fail<NumericError>("weighted_logsumexp: all weights are zero");
  Array e(coord.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < wv.size(); ++i) {
    // Zero weights still carry a gradient; cap the exponent so a far-away
    // empty pixel gets a huge but finite sensitivity at very sharp beta.
    e[i] = std::exp(std::min(beta * (coord[i] - shift), 700.0));
    if (wv[i] != 0.0) z += wv[i] * e[i];
  }
  const double value = shift + std::log(z) / beta;
  return Node::make(Array::scalar(value), {w}, [e = std::move(e), z, beta](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    const double go = self.grad[0] / (beta * z);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * e[i];
  });
}

/// Per-channel affine map out[..., c] = scale[c] * in[..., c] + offset[c].
inline Node channel_affine(const Node& a, const std::vector<double>& scale,
                           const std::vector<double>& offset) {
  const std::size_t C = a.shape().back();
  if (scale.size() != C || offset.size() != C)
    fail<ShapeError>("channel_affine: ", scale.size(), " scales for ", C,
                     " channels");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = scale[i % C] * a.value()[i] + offset[i % C];
  return Node::make(std::move(out), {a}, [scale, C](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale[i % C] * self.grad[i];
  });
}

/// a * mask + offset elementwise with constant arrays.
inline Node mask_affine(const Node& a, const Array& mask, const Array& offset) {
  if (mask.shape() != a.shape() || offset.shape() != a.shape())
    fail<ShapeError>("mask_affine: operand ", shape_str(a.shape()), " mask ",
                     shape_str(mask.shape()), " offset ", shape_str(offset.shape()));
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * mask[i] + offset[i];
  return Node::make(std::move(out), {a}, [mask](detail::NodeData& self) {
    Array& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
  });
}

/// Σ (a - b)^2 against a constant target.
inline Node sse(const Node& a, const Array& target) {
  if (target.shape() != a.shape())
    fail<ShapeError>("sse: shape mismatch ", shape_str(a.shape()), " vs ",
                     shape_str(target.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = a.value()[i] - target[i];
    s += d * d;
  }
  return Node::make(Array::scalar(s), {a}, [target](detail::NodeData& self) {
    const Array& av = detail::value_of(self, 0);
    Array& g = detail::grad_of(self, 0);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * go * (av[i] - target[i]);
  });
}

/// Σ (a - b)^2 where both sides may carry gradients.
inline Node sse(const Node& a, const Node& b) {
  detail::require_same_shape(a, b, "sse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return Node::make(Array::scalar(s), {a, b}, [](detail::NodeData& self) {
    const Array& av = detail::value_of(self, 0);
    const Array& bv = detail::value_of(self, 1);
    const double go = self.grad[0];
    if (detail::wants(self, 0)) {
      Array& g = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * go * (av[i] - bv[i]);
    }
    if (detail::wants(self, 1)) {
      Array& g = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * go * (av[i] - bv[i]);
    }
  });
}

}  // namespace invshape::ops
