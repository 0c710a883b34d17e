#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "invshape/core/ops.hpp"
#include "invshape/data/field.hpp"

namespace invshape {

/// Control points of the thin-plate spline on the normalized [-1,1]^2
/// domain: a regular lattice with one point at the center of every
/// step x step pixel block.
struct ControlPoints {
  std::vector<double> x, y;

  std::size_t size() const { return x.size(); }

  static ControlPoints lattice(std::size_t H, std::size_t W, std::size_t step = 4) {
    if (step == 0 || H % step != 0 || W % step != 0)
      fail<ConfigError>("control points: grid ", H, "x", W, " is not divisible by step ", step);
    auto coord = [](double pixel, std::size_t n) {
      return n <= 1 ? 0.0 : 2.0 * pixel / static_cast<double>(n - 1) - 1.0;
    };
    const double offset = 0.5 * static_cast<double>(step - 1);
    ControlPoints cp;
    for (std::size_t r = 0; r < H / step; ++r)
      for (std::size_t c = 0; c < W / step; ++c) {
        cp.x.push_back(coord(static_cast<double>(c * step) + offset, W));
        cp.y.push_back(coord(static_cast<double>(r * step) + offset, H));
      }
    return cp;
  }
};

/// T(r) = r^2 log r, written in terms of r^2; T(0) = 0.
inline double tps_kernel_sq(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

/// Kernel values T(|c_j - s_i|) for every output pixel i and control point
/// j, plus the source lattice. Depends only on the grid size.
struct TpsBasis {
  std::size_t height = 0, width = 0;
  ControlPoints points;
  std::vector<double> xs, ys;  // source coordinates per output pixel
  std::vector<double> kernel;  // (H*W) x p, row-major

  std::size_t pixels() const { return height * width; }
  std::size_t p() const { return points.size(); }
  std::size_t theta_size() const { return 2 * (p() + 3); }

  TpsBasis(std::size_t H, std::size_t W, ControlPoints cp)
      : height(H), width(W), points(std::move(cp)) {
    if (H == 0 || W == 0) fail<ConfigError>("tps basis: empty grid");
    xs.resize(H * W);
    ys.resize(H * W);
    kernel.resize(H * W * p());
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t P = i * W + j;
        xs[P] = normalized_coord(j, W);
        ys[P] = normalized_coord(i, H);
        double* row = kernel.data() + P * p();
        for (std::size_t c = 0; c < p(); ++c) {
          const double dx = points.x[c] - xs[P], dy = points.y[c] - ys[P];
          row[c] = tps_kernel_sq(dx * dx + dy * dy);
        }
      }
  }
};

/// Identity parameters: zero warp weights, affine part (0, 1, 0) for x and
/// (0, 0, 1) for y.
inline Array identity_theta(std::size_t p) {
  Array t({2 * (p + 3)});
  t[p + 1] = 1.0;
  t[(p + 3) + p + 2] = 1.0;
  return t;
}

/// Sampling grid H' x W' x 2 (x then y) from the affine map
/// x_t = A00 x + A01 y + A02, y_t = A10 x + A11 y + A12.
inline Array affine_grid(const Array& A, std::size_t H, std::size_t W) {
  if (A.size() != 6) fail<ShapeError>("affine_grid: expected a 2x3 matrix, got ", shape_str(A.shape()));
  Array grid({H, W, 2});
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double x = normalized_coord(j, W), y = normalized_coord(i, H);
      grid.at(i, j, 0) = A[0] * x + A[1] * y + A[2];
      grid.at(i, j, 1) = A[3] * x + A[4] * y + A[5];
    }
  return grid;
}

/// Thin-plate-spline sampling grid. Per coordinate block of theta (x block
/// first): p warp weights, then the constant, x and y coefficients of the
/// affine part. Zero warp weights are skipped, so a purely affine theta
/// reproduces affine_grid() exactly.
inline Node tps_grid(const Node& theta, const std::shared_ptr<const TpsBasis>& basis) {
  const TpsBasis& b = *basis;
  const std::size_t p = b.p(), P = b.pixels();
  if (theta.size() != b.theta_size())
    fail<ShapeError>("tps_grid: theta has ", theta.size(), " values, expected 2*(p+3) = ",
                     b.theta_size(), " for p = ", p);
  const Array& t = theta.value();
  Array grid({b.height, b.width, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    const double* w = t.raw() + c * (p + 3);
    for (std::size_t k = 0; k < P; ++k) {
      double v = w[p + 1] * b.xs[k] + w[p + 2] * b.ys[k] + w[p];
      const double* row = b.kernel.data() + k * p;
      for (std::size_t j = 0; j < p; ++j)
        if (w[j] != 0.0) v += w[j] * row[j];
      grid[2 * k + c] = v;
    }
  }
  return Node::make(std::move(grid), {theta}, [basis](detail::NodeData& self) {
    const TpsBasis& bb = *basis;
    const std::size_t pp = bb.p();
    Array& gt = ops::detail::grad_of(self, 0);
    for (std::size_t c = 0; c < 2; ++c) {
      double* gw = gt.raw() + c * (pp + 3);
      for (std::size_t k = 0; k < bb.pixels(); ++k) {
        const double g = self.grad[2 * k + c];
        if (g == 0.0) continue;
        gw[pp] += g;
        gw[pp + 1] += g * bb.xs[k];
        gw[pp + 2] += g * bb.ys[k];
        const double* row = bb.kernel.data() + k * pp;
        for (std::size_t j = 0; j < pp; ++j) gw[j] += g * row[j];
      }
    }
  });
}

}  // namespace invshape
