#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "invshape/core/node.hpp"
#include "invshape/core/rng.hpp"

namespace invshape {

struct Parameter {
  std::string name;
  Node node;
  bool trainable = true;
};

/// Ordered collection of named leaf parameters with trainable flags.
/// Copying a store shares the underlying nodes; use deep_copy() for an
/// independent set.
class ParamStore {
 public:
  Node add(std::string name, Array init, bool trainable = true) {
    Node n = Node::variable(std::move(init));
    n.set_requires_grad(trainable);
    items_.push_back({std::move(name), n, trainable});
    return n;
  }

  std::size_t size() const { return items_.size(); }
  Parameter& operator[](std::size_t i) { return items_[i]; }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void set_trainable(bool flag) {
    for (Parameter& p : items_) {
      p.trainable = flag;
      p.node.set_requires_grad(flag);
    }
  }

  bool any_trainable() const {
    for (const Parameter& p : items_)
      if (p.trainable) return true;
    return false;
  }

  void zero_grad() {
    for (Parameter& p : items_) p.node.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Parameter& p : items_) n += p.node.size();
    return n;
  }

  ParamStore deep_copy() const {
    ParamStore out;
    for (const Parameter& p : items_) out.add(p.name, p.node.value(), p.trainable);
    return out;
  }

  /// Adds the gradients held by `other` (same layout) into this store.
  void accumulate_grads_from(const ParamStore& other) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!items_[i].trainable || !other.items_[i].node.has_grad()) continue;
      Array& g = items_[i].node.mutable_grad();
      const Array& og = other.items_[i].node.grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += og[k];
    }
  }

  /// Overwrites values from `other` (same layout).
  void copy_values_from(const ParamStore& other) {
    if (other.size() != size())
      fail<ShapeError>("copy_values_from: ", other.size(), " vs ", size(), " parameters");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (other[i].node.shape() != items_[i].node.shape())
        fail<ShapeError>("copy_values_from: parameter ", items_[i].name, " shape ",
                         shape_str(items_[i].node.shape()), " vs ",
                         shape_str(other[i].node.shape()));
      items_[i].node.mutable_value() = other[i].node.value();
    }
  }

  /// FNV-1a over the bit patterns of every value.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const Parameter& p : items_)
      for (double v : p.node.value().data()) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xffu;
          h *= 1099511628211ull;
        }
      }
    return h;
  }

 private:
  std::vector<Parameter> items_;
};

/// Uniform in ±sqrt(1/fan_in).
inline Array uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  Array a(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : a.data()) v = uniform(rng, -bound, bound);
  return a;
}

}  // namespace invshape
