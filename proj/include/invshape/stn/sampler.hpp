#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "invshape/core/ops.hpp"

namespace invshape {

namespace detail {

// Normalized coordinate to pixel index, s = (c+1)/2 (n-1). Results within a
// few ulps of an integer snap onto it: the round trip through
// normalized_coord() is not exact in floating point, and the identity grid
// must hit pixel centers exactly.
inline double sample_index(double c, std::size_t n) {
  const double s = (c + 1.0) * 0.5 * static_cast<double>(n - 1);
  const double r = std::nearbyint(s);
  const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s));
  return std::abs(s - r) <= tol ? r : s;
}

struct SampleTap {
  long m0 = 0, n0 = 0;  // lower-left integer index (may be out of range)
  double fx = 0, fy = 0;
  bool inside = false;  // any of the four taps lies on the image
};

}  // namespace detail

/// Bilinear sampling U_i = sum_nm G_nm max(0,1-|x_i-m|) max(0,1-|y_i-n|) of an
/// H x W x C image at the grid's H' x W' coordinates. Taps outside the image
/// contribute zero. Differentiable with respect to the image and the grid.
inline Node bilinear_sample(const Node& image, const Node& grid) {
  if (image.shape().size() != 3) fail<ShapeError>("bilinear_sample: image must be H x W x C");
  if (grid.shape().size() != 3 || grid.shape()[2] != 2)
    fail<ShapeError>("bilinear_sample: grid must be H' x W' x 2, got ", shape_str(grid.shape()));
  const std::size_t H = image.shape()[0], W = image.shape()[1], C = image.shape()[2];
  const std::size_t Ho = grid.shape()[0], Wo = grid.shape()[1], P = Ho * Wo;
  const Array& g = grid.value();
  const Array& img = image.value();

  std::vector<detail::SampleTap> taps(P);
  Array out({Ho, Wo, C});
  for (std::size_t k = 0; k < P; ++k) {
    const double cx = g[2 * k], cy = g[2 * k + 1];
    if (!std::isfinite(cx) || !std::isfinite(cy))
      fail<NumericError>("bilinear_sample: non-finite sampling coordinate at output pixel ", k);
    const double sx = detail::sample_index(cx, W), sy = detail::sample_index(cy, H);
    detail::SampleTap& t = taps[k];
    if (!(sx > -1.0 && sx < static_cast<double>(W) && sy > -1.0 && sy < static_cast<double>(H)))
      continue;
    t.inside = true;
    const double fx0 = std::floor(sx), fy0 = std::floor(sy);
    t.m0 = static_cast<long>(fx0);
    t.n0 = static_cast<long>(fy0);
    t.fx = sx - fx0;
    t.fy = sy - fy0;
    const double wx[2] = {1.0 - t.fx, t.fx}, wy[2] = {1.0 - t.fy, t.fy};
    double* o = out.raw() + k * C;
    for (int dy = 0; dy < 2; ++dy) {
      const long n = t.n0 + dy;
      if (n < 0 || n >= static_cast<long>(H)) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const long m = t.m0 + dx;
        if (m < 0 || m >= static_cast<long>(W)) continue;
        const double w = wy[dy] * wx[dx];
        const double* src = img.raw() + (static_cast<std::size_t>(n) * W + static_cast<std::size_t>(m)) * C;
        for (std::size_t c = 0; c < C; ++c) o[c] += src[c] * w;
      }
    }
  }

  return Node::make(std::move(out), {image, grid},
                    [taps = std::move(taps), H, W, C](detail::NodeData& self) {
    const Array& gout = self.grad;
    const Array& iv = ops::detail::value_of(self, 0);
    const bool need_img = ops::detail::wants(self, 0);
    const bool need_grid = ops::detail::wants(self, 1);
    double* gi = need_img ? ops::detail::grad_of(self, 0).raw() : nullptr;
    double* gg = need_grid ? ops::detail::grad_of(self, 1).raw() : nullptr;
    const double sx_scale = 0.5 * static_cast<double>(W - 1);
    const double sy_scale = 0.5 * static_cast<double>(H - 1);
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const detail::SampleTap& t = taps[k];
      if (!t.inside) continue;
      const double wx[2] = {1.0 - t.fx, t.fx}, wy[2] = {1.0 - t.fy, t.fy};
      const double* go = gout.raw() + k * C;
      // <upstream grad, image> at tap (n, m), zero off the image.
      auto tap = [&](long n, long m) {
        if (n < 0 || m < 0 || n >= static_cast<long>(H) || m >= static_cast<long>(W)) return 0.0;
        const double* src = iv.raw() + (static_cast<std::size_t>(n) * W + static_cast<std::size_t>(m)) * C;
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += go[c] * src[c];
        return dot;
      };
      if (gi)
        for (int dy = 0; dy < 2; ++dy) {
          const long n = t.n0 + dy;
          if (n < 0 || n >= static_cast<long>(H)) continue;
          for (int dx = 0; dx < 2; ++dx) {
            const long m = t.m0 + dx;
            if (m < 0 || m >= static_cast<long>(W)) continue;
            const std::size_t off = (static_cast<std::size_t>(n) * W + static_cast<std::size_t>(m)) * C;
            for (std::size_t c = 0; c < C; ++c) gi[off + c] += go[c] * wy[dy] * wx[dx];
          }
        }
      if (!gg) continue;
      // On an exact lattice line the kernel has a kink; there the mean of
      // the one-sided slopes is used so no direction is favored.
      double dvx = 0.0, dvy = 0.0;
      for (int d = 0; d < 2; ++d) {
        const long n = t.n0 + d, m = t.m0 + d;
        dvx += wy[d] * (t.fx == 0.0 ? 0.5 * (tap(n, t.m0 + 1) - tap(n, t.m0 - 1))
                                    : tap(n, t.m0 + 1) - tap(n, t.m0));
        dvy += wx[d] * (t.fy == 0.0 ? 0.5 * (tap(t.n0 + 1, m) - tap(t.n0 - 1, m))
                                    : tap(t.n0 + 1, m) - tap(t.n0, m));
      }
      gg[2 * k] += dvx * sx_scale;
      gg[2 * k + 1] += dvy * sy_scale;
    }
  });
}

}  // namespace invshape
