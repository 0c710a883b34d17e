#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invshape/data/field.hpp"

namespace invshape {

struct ScatterPoint {
  double x, y, u, v, p;
};

struct DomainBounds {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

/// Nodes of an unstructured triangular mesh with their flow values.
struct ScatterSet {
  std::vector<ScatterPoint> points;
  std::vector<std::array<std::size_t, 3>> triangles;
  DomainBounds bounds;
};

namespace detail {

inline double signed_area2(const ScatterPoint& a, const ScatterPoint& b,
                           const ScatterPoint& c) {
  return (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
}

}  // namespace detail

/// Index range, non-degeneracy and bounds checks.
inline void validate(const ScatterSet& s) {
  const DomainBounds& b = s.bounds;
  if (!(b.x_max > b.x_min && b.y_max > b.y_min))
    fail<FormatError>("scatter: empty domain bounds");
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    const auto& tri = s.triangles[t];
    for (std::size_t idx : tri)
      if (idx >= s.points.size())
        fail<FormatError>("scatter: triangle ", t, " references point ", idx,
                          " but only ", s.points.size(), " points exist");
    const double a = detail::signed_area2(s.points[tri[0]], s.points[tri[1]],
                                          s.points[tri[2]]);
    if (!(std::abs(a) > 0.0)) fail<FormatError>("scatter: triangle ", t, " is degenerate");
  }
}

/// Parses the `POINTS` / `TRIANGLES` / `BOUNDS` text layout.
inline ScatterSet parse_scatter(std::istream& in, const std::string& name = "scatter") {
  ScatterSet s;
  bool have_points = false, have_tris = false, have_bounds = false;
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    fail<FormatError>(name, ": unexpected end of input while reading ", what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "POINTS") {
      std::size_t n;
      if (!(ls >> n)) fail<FormatError>(name, ":", lineno, ": POINTS needs a count");
      s.points.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        auto ps = next_line("points");
        ScatterPoint& p = s.points[k];
        if (!(ps >> p.x >> p.y >> p.u >> p.v >> p.p))
          fail<FormatError>(name, ":", lineno, ": expected 'x y u v p'");
      }
      have_points = true;
    } else if (key == "TRIANGLES") {
      std::size_t m;
      if (!(ls >> m)) fail<FormatError>(name, ":", lineno, ": TRIANGLES needs a count");
      s.triangles.resize(m);
      for (std::size_t k = 0; k < m; ++k) {
        auto ts = next_line("triangles");
        auto& t = s.triangles[k];
        if (!(ts >> t[0] >> t[1] >> t[2]))
          fail<FormatError>(name, ":", lineno, ": expected three point indices");
      }
      have_tris = true;
    } else if (key == "BOUNDS") {
      DomainBounds& b = s.bounds;
      if (!(ls >> b.x_min >> b.x_max >> b.y_min >> b.y_max))
        fail<FormatError>(name, ":", lineno, ": BOUNDS needs x_min x_max y_min y_max");
      have_bounds = true;
    } else {
      fail<FormatError>(name, ":", lineno, ": unknown section '", key, "'");
    }
  }
  if (!have_points || !have_tris || !have_bounds)
    fail<FormatError>(name, ": missing POINTS, TRIANGLES or BOUNDS section");
  validate(s);
  return s;
}

struct IngestedSample {
  GeometryMap geometry;
  GridField field;
};

/// Barycentric interpolation of scattered (u, v, p) onto pixel centers
/// (x_min + (j+0.5)dx, y_min + (i+0.5)dy). Pixels covered by no triangle are
/// solid; if `solid_mask` is given they must be solid there as well.
inline IngestedSample interpolate_scatter(const ScatterSet& s, std::size_t H, std::size_t W,
                                          const std::optional<GeometryMap>& solid_mask = {}) {
  validate(s);
  if (H == 0 || W == 0) fail<ConfigError>("interpolate_scatter: empty grid");
  if (solid_mask && (solid_mask->height() != H || solid_mask->width() != W))
    fail<ShapeError>("interpolate_scatter: solid mask is ", solid_mask->height(), "x",
                     solid_mask->width(), ", grid is ", H, "x", W);
  const DomainBounds& b = s.bounds;
  const double dx = (b.x_max - b.x_min) / static_cast<double>(W);
  const double dy = (b.y_max - b.y_min) / static_cast<double>(H);

  // Bucket triangles by the pixel rectangle their bounding box covers.
  std::vector<std::vector<std::size_t>> buckets(H * W);
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    const auto& tri = s.triangles[t];
    double xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
    for (std::size_t idx : tri) {
      xl = std::min(xl, s.points[idx].x);
      xh = std::max(xh, s.points[idx].x);
      yl = std::min(yl, s.points[idx].y);
      yh = std::max(yh, s.points[idx].y);
    }
    auto col = [&](double x) { return std::floor((x - b.x_min) / dx - 0.5); };
    auto row = [&](double y) { return std::floor((y - b.y_min) / dy - 0.5); };
    const long j0 = std::max(0L, static_cast<long>(col(xl)));
    const long j1 = std::min(static_cast<long>(W) - 1, static_cast<long>(col(xh)) + 1);
    const long i0 = std::max(0L, static_cast<long>(row(yl)));
    const long i1 = std::min(static_cast<long>(H) - 1, static_cast<long>(row(yh)) + 1);
    for (long i = i0; i <= i1; ++i)
      for (long j = j0; j <= j1; ++j) buckets[i * W + j].push_back(t);
  }

  IngestedSample out{GeometryMap(H, W), GridField(H, W, 3)};
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double px = b.x_min + (static_cast<double>(j) + 0.5) * dx;
      const double py = b.y_min + (static_cast<double>(i) + 0.5) * dy;
      const bool masked = solid_mask && solid_mask->solid(i, j);
      bool found = false;
      for (std::size_t t : buckets[i * W + j]) {
        const auto& tri = s.triangles[t];
        const ScatterPoint& A = s.points[tri[0]];
        const ScatterPoint& B = s.points[tri[1]];
        const ScatterPoint& C = s.points[tri[2]];
        const double area = detail::signed_area2(A, B, C);
        const ScatterPoint P{px, py, 0, 0, 0};
        const double wa = detail::signed_area2(P, B, C) / area;
        const double wb = detail::signed_area2(A, P, C) / area;
        const double wc = 1.0 - wa - wb;
        constexpr double tol = -1e-12;
        if (wa < tol || wb < tol || wc < tol) continue;
        if (!masked) {
          out.field(i, j, 0) = wa * A.u + wb * B.u + wc * C.u;
          out.field(i, j, 1) = wa * A.v + wb * B.v + wc * C.v;
          out.field(i, j, 2) = wa * A.p + wb * B.p + wc * C.p;
        }
        found = true;
        break;
      }
      if (masked || !found) {
        if (!found && solid_mask && !masked)
          fail<FormatError>("interpolate_scatter: pixel (", i, ", ", j, ") at (", px, ", ",
                            py, ") lies in no triangle and is not marked solid");
        out.geometry(i, j) = 1.0;
      }
    }
  return out;
}

}  // namespace invshape
