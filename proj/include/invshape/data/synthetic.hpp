#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "invshape/core/rng.hpp"
#include "invshape/data/dataset.hpp"

namespace invshape {

enum class ShapeKind { Rectangle, Triangle, Circle, Airfoil };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Airfoil: return "airfoil";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "rectangle") return ShapeKind::Rectangle;
  if (s == "triangle") return ShapeKind::Triangle;
  if (s == "circle") return ShapeKind::Circle;
  if (s == "airfoil") return ShapeKind::Airfoil;
  fail<ConfigError>("unknown shape family '", s, "'");
}

/// Object outline in pixel units: center at column `cx`, row `cy`, half
/// extents along x and y. A pixel belongs to the shape when its center
/// (j, i) lies strictly inside.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Rectangle;
  double cx = 0, cy = 0;
  double half_w = 1, half_h = 1;
  double camber = 0;  // airfoil only, fraction of half_h

  bool contains(double j, double i) const {
    const double dx = j - cx, dy = i - cy;
    switch (kind) {
      case ShapeKind::Rectangle:
        return std::abs(dx) < half_w && std::abs(dy) < half_h;
      case ShapeKind::Circle:
        return (dx * dx) / (half_w * half_w) + (dy * dy) / (half_h * half_h) < 1.0;
      case ShapeKind::Triangle: {
        // Apex upstream at (cx - half_w, cy), base at cx + half_w.
        const double t = (dx + half_w) / (2.0 * half_w);
        return t > 0.0 && t < 1.0 && std::abs(dy) < half_h * t;
      }
      case ShapeKind::Airfoil: {
        const double t = (dx + half_w) / (2.0 * half_w);
        if (!(t > 0.0 && t < 1.0)) return false;
        // Four-digit-series thickness law scaled to peak at half_h.
        const double yt = 0.2969 * std::sqrt(t) - 0.1260 * t - 0.3516 * t * t +
                          0.2843 * t * t * t - 0.1015 * t * t * t * t;
        const double thick = half_h * yt / 0.10015;
        const double mean_line = -camber * half_h * 4.0 * t * (1.0 - t);
        return std::abs(dy - mean_line) < thick;
      }
    }
    return false;
  }

  double x_lo() const { return cx - half_w; }
  double x_hi() const { return cx + half_w; }
  double y_lo() const { return cy - half_h; }
  double y_hi() const { return cy + half_h; }
};

inline GeometryMap rasterize(std::size_t H, std::size_t W, const std::vector<ShapeSpec>& shapes) {
  GeometryMap g(H, W);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (const ShapeSpec& s : shapes)
        if (s.contains(static_cast<double>(j), static_cast<double>(i))) {
          g(i, j) = 1.0;
          break;
        }
  return g;
}

/// Parameters of the analytic channel flow.
struct FlowParams {
  double mean_velocity = 1.0;  // mean inflow u of an unobstructed column
  double pixel_edge = 0.0;     // 0 selects 1/H
  double outlet_pressure = 1.0;
  double pressure_drop = 1.0;  // linear drop from inlet to outlet
  double bump_amplitude = 0.05;
  double bump_sigma = 3.0;     // pixels
};

/// Mass-conserving analytic field for an arbitrary geometry. Walls lie just
/// outside rows 0 and H-1. Per column u is parabolic on every fluid gap and
/// scaled so that edge * Σu is the same in all columns; v = 0; p falls
/// linearly in x plus a Gaussian stagnation bump upstream of every
/// upstream-facing surface pixel. Solid pixels are zero.
inline GridField analytic_field(const GeometryMap& g, const FlowParams& fp = {}) {
  const std::size_t H = g.height(), W = g.width();
  const double edge = fp.pixel_edge > 0.0 ? fp.pixel_edge : 1.0 / static_cast<double>(H);
  const double flux = fp.mean_velocity * static_cast<double>(H) * edge;
  GridField f(H, W, 3);

  std::vector<double> profile(H);
  for (std::size_t j = 0; j < W; ++j) {
    std::fill(profile.begin(), profile.end(), 0.0);
    std::size_t i = 0;
    double total = 0.0;
    while (i < H) {
      if (g.solid(i, j)) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < H && !g.solid(end, j)) ++end;
      const double n = static_cast<double>(end - i);
      for (std::size_t k = i; k < end; ++k) {
        const double s = (static_cast<double>(k - i) + 0.5) / n;
        profile[k] = 4.0 * s * (1.0 - s);
        total += profile[k];
      }
      i = end;
    }
    if (!(total > 0.0)) fail<ConfigError>("analytic_field: column ", j, " is fully solid");
    const double scale = flux / (edge * total);
    for (std::size_t k = 0; k < H; ++k) f(k, j, GridField::kU) = scale * profile[k];
  }

  std::vector<std::pair<std::size_t, std::size_t>> fronts;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j + 1 < W; ++j)
      if (!g.solid(i, j) && g.solid(i, j + 1)) fronts.emplace_back(i, j);

  const double inv2s2 = 1.0 / (2.0 * fp.bump_sigma * fp.bump_sigma);
  const long reach = static_cast<long>(std::ceil(5.0 * fp.bump_sigma));
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      if (g.solid(i, j)) continue;
      double p = fp.outlet_pressure +
                 fp.pressure_drop * static_cast<double>(W - 1 - j) / static_cast<double>(W - 1);
      for (const auto& [fi, fj] : fronts) {
        if (j > fj) continue;
        const long di = static_cast<long>(i) - static_cast<long>(fi);
        const long dj = static_cast<long>(fj) - static_cast<long>(j);
        if (std::abs(di) > reach || dj > reach) continue;
        p += fp.bump_amplitude * std::exp(-static_cast<double>(di * di + dj * dj) * inv2s2);
      }
      f(i, j, GridField::kP) = p;
    }
  zero_solid(f, g);
  return f;
}

struct SyntheticConfig {
  std::size_t height = 32;
  std::size_t width = 128;
  std::vector<ShapeKind> families{ShapeKind::Rectangle, ShapeKind::Triangle,
                                  ShapeKind::Circle, ShapeKind::Airfoil};
  std::size_t max_objects = 3;
  FlowParams flow;
};

namespace detail {

inline bool boxes_clear(const ShapeSpec& a, const ShapeSpec& b, double gap) {
  return a.x_hi() + gap <= b.x_lo() || b.x_hi() + gap <= a.x_lo() ||
         a.y_hi() + gap <= b.y_lo() || b.y_hi() + gap <= a.y_lo();
}

inline ShapeSpec random_shape(const SyntheticConfig& cfg, Rng& rng) {
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  ShapeSpec s;
  s.kind = cfg.families[uniform_index(rng, cfg.families.size())];
  s.half_w = uniform(rng, W / 40.0, W / 12.0);
  s.half_h = uniform(rng, H / 10.0, H / 4.0);
  if (s.kind == ShapeKind::Circle) s.half_w = s.half_h;
  if (s.kind == ShapeKind::Airfoil) {
    s.half_w = uniform(rng, W / 16.0, W / 8.0);
    s.half_h = uniform(rng, H / 16.0, H / 6.0);
    s.camber = uniform(rng, 0.0, 0.6);
  }
  const double margin_x = W / 8.0;
  s.cx = uniform(rng, margin_x + s.half_w, W - 1.0 - margin_x - s.half_w);
  s.cy = uniform(rng, 2.0 + s.half_h, H - 3.0 - s.half_h);
  return s;
}

}  // namespace detail

/// One random geometry with 1..max_objects non-overlapping shapes; every
/// column keeps at least 4 fluid pixels.
inline GeometryMap random_geometry(const SyntheticConfig& cfg, Rng& rng) {
  if (cfg.families.empty()) fail<ConfigError>("generate_synthetic: empty shape family list");
  if (cfg.height < 16 || cfg.width < 16)
    fail<ConfigError>("generate_synthetic: grid must be at least 16x16");
  for (;;) {
    const std::size_t n_obj = 1 + uniform_index(rng, std::max<std::size_t>(1, cfg.max_objects));
    std::vector<ShapeSpec> shapes;
    bool placed_all = true;
    for (std::size_t o = 0; o < n_obj && placed_all; ++o) {
      bool placed = false;
      for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
        ShapeSpec s = detail::random_shape(cfg, rng);
        bool clear = true;
        for (const ShapeSpec& other : shapes) clear = clear && detail::boxes_clear(s, other, 2.0);
        if (clear) {
          shapes.push_back(s);
          placed = true;
        }
      }
      placed_all = placed;
    }
    if (!placed_all) continue;
    GeometryMap g = rasterize(cfg.height, cfg.width, shapes);
    bool ok = g.solid_count() > 0;
    for (std::size_t j = 0; j < cfg.width && ok; ++j) {
      std::size_t fluid = 0;
      for (std::size_t i = 0; i < cfg.height; ++i) fluid += !g.solid(i, j);
      ok = fluid >= 4;
    }
    if (ok) return g;
  }
}

/// Seeded synthetic dataset of (geometry, analytic field) pairs.
inline Dataset generate_synthetic(std::uint64_t seed, std::size_t n, const SyntheticConfig& cfg) {
  if (n == 0) fail<ConfigError>("generate_synthetic: n must be >= 1");
  Rng rng(seed);
  Dataset d;
  d.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    GeometryMap g = random_geometry(cfg, rng);
    GridField f = analytic_field(g, cfg.flow);
    d.samples.push_back({std::move(g), std::move(f)});
  }
  return d;
}

}  // namespace invshape
