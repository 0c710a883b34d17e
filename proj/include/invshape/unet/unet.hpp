#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "invshape/core/ops.hpp"
#include "invshape/core/params.hpp"
#include "invshape/data/field.hpp"

namespace invshape {

/// Encoder-decoder surrogate mapping a geometry map to a (u, v, p) field.
///
/// Compression stage k (k = 1..depth) applies two 3x3 convolutions with
/// base * 2^(k-1) channels and a 2x2 max pool. The bottom stage keeps the
/// deepest channel count. Expansion stage j upsamples with a 2x2 stride-2
/// transposed convolution that halves the channels, concatenates the input
/// of the mirrored compression stage, and applies two 3x3 convolutions. The
/// last stage ends in `out_channels` with tanh; every other layer uses
/// leakyReLU(0.1).
struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 3;
  std::size_t base_channels = 32;
  std::size_t depth = 5;
  double slope = 0.1;

  std::size_t stage_channels(std::size_t k) const {
    return k == 0 ? base_channels / 2 : base_channels << (k - 1);
  }
  std::size_t divisor() const { return std::size_t{1} << depth; }
};

struct StageShape {
  std::string name;
  Shape shape;
};

class UNet {
 public:
  UNet() = default;

  UNet(UNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.depth == 0 || cfg_.base_channels < 2 || cfg_.base_channels % 2 != 0)
      fail<ConfigError>("UNet: base_channels must be even and >= 2, depth >= 1");
    Rng rng(seed);
    auto conv = [&](const std::string& name, std::size_t k, std::size_t cin, std::size_t cout) {
      params_.add(name + ".weight", uniform_fan_in({k, k, cin, cout}, k * k * cin, rng));
      params_.add(name + ".bias", uniform_fan_in({cout}, k * k * cin, rng));
    };
    std::size_t prev = cfg_.in_channels;
    for (std::size_t k = 1; k <= cfg_.depth; ++k) {
      const std::size_t c = cfg_.stage_channels(k);
      conv("enc" + std::to_string(k) + ".conv1", 3, prev, c);
      conv("enc" + std::to_string(k) + ".conv2", 3, c, c);
      prev = c;
    }
    conv("bottom.conv1", 3, prev, prev);
    conv("bottom.conv2", 3, prev, prev);
    for (std::size_t k = cfg_.depth; k >= 1; --k) {
      const std::string tag = "dec" + std::to_string(cfg_.depth - k + 1);
      const std::size_t up = cfg_.stage_channels(k - 1);
      const std::size_t skip = k == 1 ? cfg_.in_channels : cfg_.stage_channels(k - 1);
      conv(tag + ".up", 2, prev, up);
      conv(tag + ".conv1", 3, up + skip, up);
      conv(tag + ".conv2", 3, up, k == 1 ? cfg_.out_channels : up);
      prev = up;
    }
  }

  const UNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Independent copy of the parameters.
  UNet deep_copy() const {
    UNet out;
    out.cfg_ = cfg_;
    out.params_ = params_.deep_copy();
    return out;
  }

  void freeze() { params_.set_trainable(false); }
  bool frozen() const { return !params_.any_trainable(); }

  /// Normalized-scale prediction for an H x W x in_channels geometry.
  Node forward(const Node& geometry, std::vector<StageShape>* trace = nullptr) const {
    if (geometry.shape().size() != 3 || geometry.shape()[2] != cfg_.in_channels)
      fail<ShapeError>("unet_forward: expected H x W x ", cfg_.in_channels, " input, got ",
                       shape_str(geometry.shape()));
    const std::size_t H = geometry.shape()[0], W = geometry.shape()[1];
    if (H % cfg_.divisor() != 0 || W % cfg_.divisor() != 0)
      fail<ShapeError>("unet_forward: spatial size ", H, "x", W, " is not divisible by ",
                       cfg_.divisor());
    std::size_t at = 0;
    auto next = [&]() -> const Node& { return params_[at++].node; };
    auto conv = [&](const Node& x, std::size_t pad) {
      const Node& w = next();
      const Node& b = next();
      return ops::conv2d(x, w, b, 1, pad);
    };
    auto record = [&](std::string name, const Node& n) {
      if (trace) trace->push_back({std::move(name), n.shape()});
    };

    std::vector<Node> skips;
    Node x = geometry;
    for (std::size_t k = 1; k <= cfg_.depth; ++k) {
      skips.push_back(x);
      x = ops::leaky_relu(conv(x, 1), cfg_.slope);
      x = ops::leaky_relu(conv(x, 1), cfg_.slope);
      record("enc" + std::to_string(k), x);
      x = ops::maxpool2(x);
    }
    x = ops::leaky_relu(conv(x, 1), cfg_.slope);
    x = ops::leaky_relu(conv(x, 1), cfg_.slope);
    record("bottom", x);
    for (std::size_t k = cfg_.depth; k >= 1; --k) {
      const Node& w = next();
      const Node& b = next();
      x = ops::leaky_relu(ops::conv_transpose2d(x, w, b, 2), cfg_.slope);
      x = ops::concat_channels(x, skips[k - 1]);
      x = ops::leaky_relu(conv(x, 1), cfg_.slope);
      x = conv(x, 1);
      x = k == 1 ? ops::tanh_act(x) : ops::leaky_relu(x, cfg_.slope);
      record("dec" + std::to_string(cfg_.depth - k + 1), x);
    }
    return x;
  }

  Node forward(const GeometryMap& g) const { return forward(Node::constant(g.values())); }

 private:
  UNetConfig cfg_;
  ParamStore params_;
};

/// Sum (not mean) of squared elementwise differences.
inline Node sse_loss(const Node& predicted, const Array& truth) {
  return ops::sse(predicted, truth);
}

inline double sse_loss(const Array& predicted, const Array& truth) {
  if (predicted.shape() != truth.shape())
    fail<ShapeError>("sse_loss: shape mismatch ", shape_str(predicted.shape()), " vs ",
                     shape_str(truth.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return s;
}

}  // namespace invshape
