#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "invshape/core/error.hpp"

namespace invshape {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array of doubles.
class Array {
 public:
  Array() = default;

  explicit Array(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Array(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      fail<ShapeError>("array data length ", data_.size(),
                       " does not match shape ", shape_str(shape_));
  }

  static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 (H x W x C) element access.
  double& at(std::size_t i, std::size_t j, std::size_t c) {
    return data_[(i * shape_[1] + j) * shape_[2] + c];
  }
  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return data_[(i * shape_[1] + j) * shape_[2] + c];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape with the same element count.
  Array reshaped(Shape shape) const {
    return Array(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Bit-for-bit equality of shape and contents.
inline bool bitwise_equal(const Array& a, const Array& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 ||
          std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) == 0);
}

inline double max_abs_diff(const Array& a, const Array& b) {
  if (a.shape() != b.shape())
    fail<ShapeError>("max_abs_diff: shape ", shape_str(a.shape()), " vs ",
                     shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace invshape
