#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "invshape/core/ops.hpp"
#include "invshape/core/rng.hpp"
#include "invshape/data/field.hpp"

namespace invshape {

struct Sample {
  GeometryMap geometry;
  GridField field;
};

/// Min-max range of one channel over the training split. A degenerate
/// channel (max == min) normalizes to 0 and denormalizes to `min`.
struct ChannelRange {
  double min = 0.0;
  double max = 0.0;
  bool degenerate() const { return !(max > min); }
};

/// Per-channel affine map of physical values onto [-1,1].
struct Normalization {
  std::vector<ChannelRange> channels;

  bool empty() const { return channels.empty(); }

  double normalize(double value, std::size_t c) const {
    const ChannelRange& r = channels[c];
    if (r.degenerate()) return 0.0;
    return 2.0 * (value - r.min) / (r.max - r.min) - 1.0;
  }
  double denormalize(double value, std::size_t c) const {
    const ChannelRange& r = channels[c];
    if (r.degenerate()) return r.min;
    // Same arithmetic as the Node overload below.
    return 0.5 * (r.max - r.min) * value + (0.5 * (r.max - r.min) + r.min);
  }

  Array normalize(const Array& field) const { return apply(field, true); }
  Array denormalize(const Array& field) const { return apply(field, false); }

  /// Differentiable denormalization of a network output.
  Node denormalize(const Node& field) const {
    check(field.shape());
    std::vector<double> scale(channels.size()), offset(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const ChannelRange& r = channels[c];
      scale[c] = r.degenerate() ? 0.0 : 0.5 * (r.max - r.min);
      offset[c] = r.degenerate() ? r.min : 0.5 * (r.max - r.min) + r.min;
    }
    return ops::channel_affine(field, scale, offset);
  }

 private:
  void check(const Shape& shape) const {
    if (shape.empty() || shape.back() != channels.size())
      fail<ShapeError>("normalization has ", channels.size(), " channels, field is ",
                       shape_str(shape));
  }
  Array apply(const Array& field, bool forward) const {
    check(field.shape());
    Array out(field.shape());
    const std::size_t C = channels.size();
    for (std::size_t k = 0; k < field.size(); ++k)
      out[k] = forward ? normalize(field[k], k % C) : denormalize(field[k], k % C);
    return out;
  }
};

/// Samples hold physical (denormalized) fields; `normalization` describes the
/// map to network scale.
struct Dataset {
  std::vector<Sample> samples;
  Normalization normalization;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;

  std::size_t size() const { return samples.size(); }
  std::size_t height() const { return samples.empty() ? 0 : samples[0].geometry.height(); }
  std::size_t width() const { return samples.empty() ? 0 : samples[0].geometry.width(); }
  std::size_t channels() const { return samples.empty() ? 0 : samples[0].field.channels(); }
};

/// Seeded shuffle then partition.
inline Dataset split(Dataset d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail<ConfigError>("split: train fraction must lie in (0,1), got ", train_fraction);
  const std::size_t n = d.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    fail<ConfigError>("split: fraction ", train_fraction, " of ", n,
                      " samples leaves one side empty");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  shuffle(idx, rng);
  d.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  d.eval.assign(idx.begin() + static_cast<long>(n_train), idx.end());
  return d;
}

/// Computes per-channel ranges over the training split.
inline Dataset normalize(Dataset d) {
  if (d.train.empty()) fail<ConfigError>("normalize: training split is empty");
  const std::size_t C = d.channels();
  d.normalization.channels.assign(C, ChannelRange{INFINITY, -INFINITY});
  for (std::size_t s : d.train) {
    const Array& v = d.samples.at(s).field.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      ChannelRange& r = d.normalization.channels[k % C];
      r.min = std::min(r.min, v[k]);
      r.max = std::max(r.max, v[k]);
    }
  }
  return d;
}

/// Dataset whose values survive a float32 round trip unchanged.
inline Dataset quantize_to_f32(Dataset d) {
  auto q = [](Array& a) {
    for (double& v : a.data()) v = static_cast<double>(static_cast<float>(v));
  };
  for (Sample& s : d.samples) {
    q(s.geometry.values());
    q(s.field.values());
  }
  // Separate passes: GCC 11 at -O3 mis-vectorizes the fused min/max loop and
  // leaves the last channel unrounded.
  for (ChannelRange& r : d.normalization.channels) r.min = static_cast<float>(r.min);
  for (ChannelRange& r : d.normalization.channels) r.max = static_cast<float>(r.max);
  return d;
}

}  // namespace invshape
