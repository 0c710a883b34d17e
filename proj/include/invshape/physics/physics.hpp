#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "invshape/core/ops.hpp"
#include "invshape/data/field.hpp"

// Physical quantities on denormalized (u, v, p) fields. A pixel is fluid when
// its geometry value is <= 0.5. The channel walls lie just outside rows 0 and
// H-1, so they never appear in the geometry map.
namespace invshape {

struct PhysicsConfig {
  double rho = 1.0;
  double pixel_edge = 0.0;  // 0 selects 1/H
  std::size_t inlet_column = 0;
  std::optional<std::size_t> outlet_column;  // unset selects W-1
  /// false: rho/2 |u+v|^2 as the dynamic pressure; true: rho/2 (u^2 + v^2).
  bool standard_dynamic_pressure = false;
  /// Smooth-extrema temperature for L and H, in inverse normalized units.
  double beta = 50.0;

  double edge(std::size_t H) const { return pixel_edge > 0.0 ? pixel_edge : 1.0 / static_cast<double>(H); }
  std::size_t outlet(std::size_t W) const { return outlet_column.value_or(W - 1); }

  void validate(std::size_t W) const {
    if (!(rho > 0.0)) fail<ConfigError>("physics: rho must be > 0, got ", rho);
    if (pixel_edge < 0.0) fail<ConfigError>("physics: pixel_edge must be > 0, got ", pixel_edge);
    if (!(beta > 0.0)) fail<ConfigError>("physics: beta must be > 0, got ", beta);
    if (!(inlet_column < outlet(W) && outlet(W) < W))
      fail<ConfigError>("physics: need 0 <= inlet (", inlet_column, ") < outlet (", outlet(W),
                        ") < W (", W, ")");
  }
};

namespace detail {

inline void require_field(const Shape& s, const GeometryMap& g, const char* op) {
  if (s.size() != 3 || s[2] != 3 || s[0] != g.height() || s[1] != g.width())
    fail<ShapeError>(op, ": field ", shape_str(s), " does not match geometry ", g.height(), "x",
                     g.width(), " with channels (u, v, p)");
}

/// Weights selecting the mean of `channel` over the fluid pixels of `col`.
inline Array column_mean_weights(const GeometryMap& g, std::size_t col, std::size_t channel,
                                 const char* op) {
  const std::size_t H = g.height(), W = g.width();
  std::size_t n = 0;
  for (std::size_t i = 0; i < H; ++i) n += !g.solid(i, col);
  if (n == 0) fail<ConfigError>(op, ": column ", col, " is fully solid");
  Array w({H, W, 3});
  for (std::size_t i = 0; i < H; ++i)
    if (!g.solid(i, col)) w.at(i, col, channel) = 1.0 / static_cast<double>(n);
  return w;
}

}  // namespace detail

/// Δp = (rho/2 |u2+v2|^2 + p2) - (rho/2 |u1+v1|^2 + p1) with boundary-column
/// means over fluid pixels; 1 = inlet, 2 = outlet.
inline Node total_pressure_difference(const Node& field, const GeometryMap& g,
                                      const PhysicsConfig& cfg) {
  constexpr const char* op = "total_pressure_difference";
  detail::require_field(field.shape(), g, op);
  cfg.validate(g.width());
  auto boundary = [&](std::size_t col) {
    const Node u = ops::weighted_sum(field, detail::column_mean_weights(g, col, GridField::kU, op));
    const Node v = ops::weighted_sum(field, detail::column_mean_weights(g, col, GridField::kV, op));
    const Node p = ops::weighted_sum(field, detail::column_mean_weights(g, col, GridField::kP, op));
    const Node dyn = cfg.standard_dynamic_pressure ? ops::add(ops::square(u), ops::square(v))
                                                   : ops::square(ops::add(u, v));
    return ops::add(ops::scale(dyn, 0.5 * cfg.rho), p);
  };
  return ops::sub(boundary(cfg.outlet(g.width())), boundary(cfg.inlet_column));
}

inline double total_pressure_difference(const GridField& f, const GeometryMap& g,
                                        const PhysicsConfig& cfg) {
  return total_pressure_difference(Node::constant(f.values()), g, cfg).value()[0];
}

// ---------------------------------------------------------------------------
// Surfaces and forces

enum Face : std::size_t { kFront = 0, kBack = 1, kTop = 2, kBottom = 3 };
inline constexpr std::array<const char*, 4> kFaceNames{"front", "back", "top", "bottom"};

/// Fluid pixels (flat index i*W + j) adjacent to a solid pixel: front has
/// the solid to its right, back to its left, top below it, bottom above it.
struct SurfaceMask {
  std::size_t height = 0, width = 0;
  std::array<std::vector<std::size_t>, 4> faces;
};

inline SurfaceMask extract_surfaces(const GeometryMap& g) {
  if (g.solid_count() == 0) fail<ConfigError>("extract_surfaces: geometry has no solid pixels");
  const std::size_t H = g.height(), W = g.width();
  SurfaceMask m{H, W, {}};
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      if (g.solid(i, j)) continue;
      const std::size_t k = i * W + j;
      if (j + 1 < W && g.solid(i, j + 1)) m.faces[kFront].push_back(k);
      if (j > 0 && g.solid(i, j - 1)) m.faces[kBack].push_back(k);
      if (i + 1 < H && g.solid(i + 1, j)) m.faces[kTop].push_back(k);
      if (i > 0 && g.solid(i - 1, j)) m.faces[kBottom].push_back(k);
    }
  return m;
}

/// F_i = Σ_{pixels of face i} p * pixel_edge.
inline std::array<Node, 4> surface_forces(const Node& field, const SurfaceMask& mask,
                                          const PhysicsConfig& cfg) {
  const Shape expect{mask.height, mask.width, 3};
  if (field.shape() != expect)
    fail<ShapeError>("surface_forces: field ", shape_str(field.shape()), " vs mask ",
                     shape_str(expect));
  const double edge = cfg.edge(mask.height);
  std::array<Node, 4> out;
  for (std::size_t f = 0; f < 4; ++f) {
    Array w(expect);
    for (std::size_t k : mask.faces[f]) w[3 * k + GridField::kP] = edge;
    out[f] = ops::weighted_sum(field, w);
  }
  return out;
}

inline std::array<double, 4> surface_forces(const GridField& f, const SurfaceMask& mask,
                                            const PhysicsConfig& cfg) {
  const auto n = surface_forces(Node::constant(f.values()), mask, cfg);
  return {n[0].value()[0], n[1].value()[0], n[2].value()[0], n[3].value()[0]};
}

// ---------------------------------------------------------------------------
// Continuity

/// rho * u * A through column `col`: A = fluid count * edge, u = fluid mean.
inline double column_flux(const GridField& f, const GeometryMap& g, std::size_t col,
                          const PhysicsConfig& cfg) {
  std::size_t n = 0;
  double s = 0.0;
  for (std::size_t i = 0; i < f.height(); ++i)
    if (!g.solid(i, col)) {
      s += f(i, col, GridField::kU);
      ++n;
    }
  if (n == 0) fail<ConfigError>("continuity_residual: column ", col, " is fully solid");
  const double area = static_cast<double>(n) * cfg.edge(f.height());
  return cfg.rho * (s / static_cast<double>(n)) * area;
}

/// ΔQ = rho u2 A2 - rho u1 A1 between the inlet and `outlet_column`.
inline double continuity_residual(const GridField& f, const GeometryMap& g,
                                  const PhysicsConfig& cfg, std::size_t outlet_column) {
  detail::require_field(f.values().shape(), g, "continuity_residual");
  if (outlet_column >= f.width() || cfg.inlet_column >= f.width())
    fail<ConfigError>("continuity_residual: column ", outlet_column, " outside width ", f.width());
  return column_flux(f, g, outlet_column, cfg) - column_flux(f, g, cfg.inlet_column, cfg);
}

/// ΔQ with the outlet swept over every column.
inline std::vector<double> continuity_profile(const GridField& f, const GeometryMap& g,
                                              const PhysicsConfig& cfg) {
  std::vector<double> out(f.width());
  for (std::size_t j = 0; j < f.width(); ++j) out[j] = continuity_residual(f, g, cfg, j);
  return out;
}

// ---------------------------------------------------------------------------
// Geometric moments

struct GeometryMoments {
  Node length, height;  // smooth extents along x and y
  Node com_x, com_y;    // g-weighted centroid
};

/// Moments in normalized [-1,1] coordinates of the pixel centers. The smooth
/// maximum is (1/beta) log Σ g exp(beta x), the minimum its mirror, and each
/// extent adds one pixel pitch so a single column has extent one pitch.
inline GeometryMoments geometry_moments(const Node& g, double beta = 50.0) {
  if (g.shape().size() != 3 || g.shape()[2] != 1)
    fail<ShapeError>("geometry_moments: expected H x W x 1, got ", shape_str(g.shape()));
  const std::size_t H = g.shape()[0], W = g.shape()[1];
  double mass = 0.0;
  for (double v : g.value().data()) {
    if (v < 0.0) fail<ConfigError>("geometry_moments: negative geometry value ", v);
    mass += v;
  }
  if (!(mass > 0.0)) fail<ConfigError>("geometry_moments: empty geometry map");
  Array X({H, W, 1}), Y({H, W, 1});
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      X.at(i, j, 0) = normalized_coord(j, W);
      Y.at(i, j, 0) = normalized_coord(i, H);
    }
  auto negated = [](Array a) {
    for (double& v : a.data()) v = -v;
    return a;
  };
  auto extent = [&](const Array& c, std::size_t n) {
    const Node hi = ops::weighted_logsumexp(g, c, beta);
    const Node lo = ops::weighted_logsumexp(g, negated(c), beta);  // = -smooth min
    const double pitch = n > 1 ? 2.0 / static_cast<double>(n - 1) : 0.0;
    return ops::add_scalar(ops::add(hi, lo), pitch);
  };
  GeometryMoments m;
  m.length = extent(X, W);
  m.height = extent(Y, H);
  const Node total = ops::sum(g);
  m.com_x = ops::divide(ops::weighted_sum(g, X), total);
  m.com_y = ops::divide(ops::weighted_sum(g, Y), total);
  return m;
}

// ---------------------------------------------------------------------------
// Plain-value summary

struct PhysicalQuantities {
  double delta_p = 0;
  std::array<double, 4> forces{};
  double length = 0, height = 0, com_x = 0, com_y = 0;
};

inline PhysicalQuantities compute_quantities(const GridField& f, const GeometryMap& g,
                                             const PhysicsConfig& cfg) {
  PhysicalQuantities q;
  q.delta_p = total_pressure_difference(f, g, cfg);
  q.forces = surface_forces(f, extract_surfaces(g), cfg);
  const GeometryMoments m = geometry_moments(Node::constant(g.values()), cfg.beta);
  q.length = m.length.value()[0];
  q.height = m.height.value()[0];
  q.com_x = m.com_x.value()[0];
  q.com_y = m.com_y.value()[0];
  return q;
}

}  // namespace invshape
