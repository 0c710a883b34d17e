#pragma once

#include <cstddef>

#include "invshape/core/array.hpp"

namespace invshape {

inline constexpr double kSolidThreshold = 0.5;

/// Single-channel occupancy map, 0 = fluid, 1 = solid. Values stay in
/// [0,1] after warping.
class GeometryMap {
 public:
  GeometryMap() = default;
  GeometryMap(std::size_t height, std::size_t width)
      : values_({height, width, 1}) {}
  explicit GeometryMap(Array values) : values_(std::move(values)) {
    if (values_.rank() != 3 || values_.dim(2) != 1)
      fail<ShapeError>("GeometryMap expects H x W x 1, got ", shape_str(values_.shape()));
  }

  std::size_t height() const { return values_.dim(0); }
  std::size_t width() const { return values_.dim(1); }
  double operator()(std::size_t i, std::size_t j) const { return values_.at(i, j, 0); }
  double& operator()(std::size_t i, std::size_t j) { return values_.at(i, j, 0); }
  bool solid(std::size_t i, std::size_t j) const {
    return values_.at(i, j, 0) > kSolidThreshold;
  }

  const Array& values() const { return values_; }
  Array& values() { return values_; }

  std::size_t solid_count() const {
    std::size_t n = 0;
    for (double v : values_.data()) n += v > kSolidThreshold;
    return n;
  }

 private:
  Array values_;
};

/// H x W x C field; channel order (u, v, p) when C = 3.
class GridField {
 public:
  static constexpr std::size_t kU = 0, kV = 1, kP = 2;

  GridField() = default;
  GridField(std::size_t height, std::size_t width, std::size_t channels)
      : values_({height, width, channels}) {}
  explicit GridField(Array values) : values_(std::move(values)) {
    if (values_.rank() != 3)
      fail<ShapeError>("GridField expects H x W x C, got ", shape_str(values_.shape()));
  }

  std::size_t height() const { return values_.dim(0); }
  std::size_t width() const { return values_.dim(1); }
  std::size_t channels() const { return values_.dim(2); }
  double operator()(std::size_t i, std::size_t j, std::size_t c) const {
    return values_.at(i, j, c);
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t c) {
    return values_.at(i, j, c);
  }

  const Array& values() const { return values_; }
  Array& values() { return values_; }

 private:
  Array values_;
};

/// Rounds to {0,1}; ties go to solid.
inline GeometryMap binarize_geometry(const GeometryMap& g) {
  GeometryMap out(g.height(), g.width());
  for (std::size_t k = 0; k < g.values().size(); ++k)
    out.values()[k] = g.values()[k] < 0.5 ? 0.0 : 1.0;
  return out;
}

inline bool is_binary(const GeometryMap& g) {
  for (double v : g.values().data())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

/// Zeroes every channel on solid pixels of `g`.
inline void zero_solid(GridField& f, const GeometryMap& g) {
  for (std::size_t i = 0; i < f.height(); ++i)
    for (std::size_t j = 0; j < f.width(); ++j)
      if (g.solid(i, j))
        for (std::size_t c = 0; c < f.channels(); ++c) f(i, j, c) = 0.0;
}

/// Normalized [-1,1] coordinate of pixel index `i` on an axis of `n` pixels
/// (pixel centers at the interval ends).
inline double normalized_coord(std::size_t i, std::size_t n) {
  if (n <= 1) return 0.0;
  return 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
}

}  // namespace invshape
