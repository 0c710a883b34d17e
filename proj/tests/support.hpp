#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "invshape/core/ops.hpp"
#include "invshape/core/rng.hpp"
#include "invshape/data/field.hpp"

namespace invshape::testing {

inline Array random_array(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array a(shape);
  for (double& v : a.data()) v = uniform(rng, lo, hi);
  return a;
}

/// Scalar reduction with fixed random weights, so every output element
/// contributes to the checked gradient.
inline Node probe(const Node& out, Rng& rng) {
  return ops::weighted_sum(out, random_array(out.shape(), rng));
}

struct GradCheck {
  double relative_error = 0;  // ||analytic - numeric|| / max(||numeric||, tiny)
  std::size_t coordinates = 0;
};

using ScalarFn = std::function<Node(const std::vector<Node>&)>;

/// Central differences with step h on up to `per_leaf` coordinates of every
/// leaf, compared against backward(). The relative error is taken over the
/// stacked vector of checked partial derivatives.
inline GradCheck check_gradients(const std::vector<Array>& leaves, const ScalarFn& fn, Rng& rng,
                                 double h = 1e-5, std::size_t per_leaf = 24) {
  std::vector<Node> vars;
  for (const Array& a : leaves) vars.push_back(Node::variable(a));
  const Node out = fn(vars);
  backward(out);
  double diff2 = 0.0, ref2 = 0.0;
  GradCheck res;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    std::vector<std::size_t> idx(leaves[l].size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    shuffle(idx, rng);
    idx.resize(std::min(per_leaf, idx.size()));
    const Array analytic = vars[l].has_grad() ? vars[l].grad() : Array(leaves[l].shape());
    for (std::size_t k : idx) {
      auto eval = [&](double delta) {
        std::vector<Node> c;
        for (std::size_t m = 0; m < leaves.size(); ++m) {
          Array a = leaves[m];
          if (m == l) a[k] += delta;
          c.push_back(Node::constant(std::move(a)));
        }
        return fn(c).value()[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      ref2 += numeric * numeric;
      ++res.coordinates;
    }
  }
  res.relative_error = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
  return res;
}

/// Axis-aligned solid block on rows [r0, r1) and columns [c0, c1).
inline GeometryMap block(std::size_t H, std::size_t W, std::size_t r0, std::size_t r1,
                         std::size_t c0, std::size_t c1) {
  GeometryMap g(H, W);
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) g(i, j) = 1.0;
  return g;
}

}  // namespace invshape::testing
