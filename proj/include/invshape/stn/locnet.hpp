#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "invshape/core/adam.hpp"
#include "invshape/core/checkpoint.hpp"
#include "invshape/core/parallel.hpp"
#include "invshape/stn/sampler.hpp"
#include "invshape/stn/tps.hpp"

namespace invshape {

/// Localization network: five 3x3 stride-2 convolutions with leakyReLU(0.2)
/// followed by a dense layer with tanh emitting the TPS parameters.
struct LocNetConfig {
  std::size_t height = 32;
  std::size_t width = 128;
  std::vector<std::size_t> conv_channels{64, 128, 128, 128, 64};
  double slope = 0.2;
  std::size_t control_step = 4;
  /// Dense-layer bias is atanh(identity_gain * identity theta).
  double identity_gain = 0.99;
  /// Dense weights start uniform in ±fc_weight_scale*sqrt(1/fan_in); 0 gives
  /// an input-independent initial theta.
  double fc_weight_scale = 0.0;

  std::size_t feature_count() const {
    std::size_t h = height, w = width;
    for (std::size_t k = 0; k < conv_channels.size(); ++k) {
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
    return h * w * (conv_channels.empty() ? 1 : conv_channels.back());
  }
};

struct StnOutput {
  Node theta;
  Node grid;
  Node warped;
};

class LocNet {
 public:
  LocNet() = default;

  LocNet(LocNetConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        basis_(std::make_shared<const TpsBasis>(
            cfg_.height, cfg_.width,
            ControlPoints::lattice(cfg_.height, cfg_.width, cfg_.control_step))) {
    if (cfg_.conv_channels.empty()) fail<ConfigError>("LocNet: at least one convolution required");
    if (!(cfg_.identity_gain > 0.0 && cfg_.identity_gain < 1.0))
      fail<ConfigError>("LocNet: identity_gain must lie in (0,1)");
    Rng rng(seed);
    std::size_t prev = 1;
    for (std::size_t k = 0; k < cfg_.conv_channels.size(); ++k) {
      const std::size_t c = cfg_.conv_channels[k];
      const std::string name = "conv" + std::to_string(k + 1);
      params_.add(name + ".weight", uniform_fan_in({3, 3, prev, c}, 9 * prev, rng));
      params_.add(name + ".bias", uniform_fan_in({c}, 9 * prev, rng));
      prev = c;
    }
    const std::size_t n = cfg_.feature_count(), m = basis_->theta_size();
    Array w = uniform_fan_in({m, n}, n, rng);
    for (double& v : w.data()) v *= cfg_.fc_weight_scale;
    Array b = identity_theta(basis_->p());
    for (double& v : b.data()) v = std::atanh(cfg_.identity_gain * v);
    params_.add("fc1.weight", std::move(w));
    params_.add("fc1.bias", std::move(b));
  }

  const LocNetConfig& config() const { return cfg_; }
  const std::shared_ptr<const TpsBasis>& basis() const { return basis_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t theta_size() const { return basis_->theta_size(); }

  LocNet deep_copy() const {
    LocNet out;
    out.cfg_ = cfg_;
    out.basis_ = basis_;  // immutable, shared
    out.params_ = params_.deep_copy();
    return out;
  }

  Node forward(const Node& g) const {
    if (g.shape() != Shape{cfg_.height, cfg_.width, 1})
      fail<ShapeError>("locnet_forward: expected ", cfg_.height, "x", cfg_.width,
                       "x1 input, got ", shape_str(g.shape()));
    Node x = g;
    std::size_t at = 0;
    for (std::size_t k = 0; k < cfg_.conv_channels.size(); ++k) {
      const Node& w = params_[at++].node;
      const Node& b = params_[at++].node;
      x = ops::leaky_relu(ops::conv2d(x, w, b, 2, 1), cfg_.slope);
    }
    x = ops::reshape(x, {x.size()});
    const Node& w = params_[at++].node;
    const Node& b = params_[at++].node;
    return ops::tanh_act(ops::linear(x, w, b));
  }

  /// theta = f(G), grid = TPS(theta), U = sample(G, grid).
  StnOutput transform(const Node& g) const {
    StnOutput o;
    o.theta = forward(g);
    o.grid = tps_grid(o.theta, basis_);
    o.warped = bilinear_sample(g, o.grid);
    return o;
  }

 private:
  LocNetConfig cfg_;
  std::shared_ptr<const TpsBasis> basis_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// Checkpoints. The grid size is not recoverable from the layer shapes alone,
// so loading takes it from the caller.

inline void save_locnet(const std::filesystem::path& path, const LocNet& net) {
  io::write_file(path, encode_params(net.params(), "LOC1"));
}

inline LocNet decode_locnet(const std::vector<unsigned char>& bytes, std::size_t H,
                            std::size_t W, const std::string& name = "locnet") {
  const std::vector<Shape> shapes = checkpoint_layer_shapes(bytes, "LOC1", name);
  if (shapes.size() < 4 || shapes.size() % 2 != 0)
    fail<FormatError>(name, ": ", shapes.size(), " layers do not describe a localization network");
  LocNetConfig cfg;
  cfg.height = H;
  cfg.width = W;
  cfg.conv_channels.clear();
  for (std::size_t k = 0; k + 2 < shapes.size(); k += 2) {
    if (shapes[k].size() != 4)
      fail<FormatError>(name, ": layer ", k, " is not a convolution kernel");
    cfg.conv_channels.push_back(shapes[k][3]);
  }
  LocNet net(cfg, 0);
  decode_params_into(net.params(), bytes, "LOC1", name);
  return net;
}

inline LocNet load_locnet(const std::filesystem::path& path, std::size_t H, std::size_t W) {
  return decode_locnet(io::read_file(path), H, W, path.string());
}

// ---------------------------------------------------------------------------
// Identity pretraining

struct PretrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_iterations = 3000;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
  /// Target mean per-pixel squared error of the reproduction.
  double threshold = 1e-3;
  /// Training stops once the training-set error is below threshold * stop_fraction.
  double stop_fraction = 0.1;
  std::size_t check_every = 10;
  /// Divergence: a check exceeding divergence_factor * best, or `patience`
  /// consecutive rising checks.
  double divergence_factor = 10.0;
  std::size_t patience = 25;
  std::size_t threads = 1;
};

struct PretrainReport {
  std::vector<double> batch_loss;  // mean per-pixel SSE of every batch
  std::vector<std::pair<std::size_t, double>> checks;  // (iteration, train error)
  double train_error = 0;
  double eval_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean per-pixel squared error between a geometry and its reproduction.
inline double reproduction_error(const LocNet& net, const GeometryMap& g) {
  const Node gn = Node::constant(g.values());
  const Node u = net.transform(gn).warped;
  double s = 0.0;
  for (std::size_t k = 0; k < g.values().size(); ++k) {
    const double d = u.value()[k] - g.values()[k];
    s += d * d;
  }
  return s / static_cast<double>(g.values().size());
}

inline double mean_reproduction_error(const LocNet& net, const std::vector<GeometryMap>& gs) {
  double s = 0.0;
  for (const GeometryMap& g : gs) s += reproduction_error(net, g);
  return gs.empty() ? 0.0 : s / static_cast<double>(gs.size());
}

/// Trains the network to reproduce its input, minimizing SSE(U, G) per
/// pixel. Throws NumericError on divergence.
inline PretrainReport pretrain_identity(LocNet& net, const std::vector<GeometryMap>& train,
                                        const std::vector<GeometryMap>& held_out,
                                        const PretrainConfig& cfg) {
  if (train.empty()) fail<ConfigError>("pretrain_identity: no training geometries");
  if (cfg.batch_size == 0 || cfg.check_every == 0)
    fail<ConfigError>("pretrain_identity: batch_size and check_every must be >= 1");
  if (!(cfg.threshold > 0.0)) fail<ConfigError>("pretrain_identity: threshold must be > 0");
  AdamState adam(net.params(), AdamConfig{cfg.learning_rate});
  const std::size_t threads = resolve_threads(cfg.threads);
  const double pixels = static_cast<double>(net.config().height * net.config().width);

  PretrainReport rep;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  std::size_t cursor = order.size();
  double best = std::numeric_limits<double>::infinity(), last = best;
  std::size_t rising = 0;

  auto check = [&](std::size_t it) {
    const double e = mean_reproduction_error(net, train);
    rep.checks.emplace_back(it, e);
    rep.train_error = e;
    if (!std::isfinite(e) || e > cfg.divergence_factor * best)
      fail<NumericError>("pretrain_identity: diverged at iteration ", it, " (error ", e,
                         ", best ", best, "); use a smaller learning rate");
    rising = e > last ? rising + 1 : 0;
    if (cfg.patience > 0 && rising >= cfg.patience)
      fail<NumericError>("pretrain_identity: error rose for ", rising,
                         " consecutive checks up to iteration ", it,
                         "; use a smaller learning rate");
    last = e;
    best = std::min(best, e);
    return e < cfg.threshold * cfg.stop_fraction;
  };

  rep.converged = check(0);
  while (!rep.converged && rep.iterations < cfg.max_iterations) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(cfg.batch_size, train.size())) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    net.params().zero_grad();
    const double inv = 1.0 / (pixels * static_cast<double>(batch.size()));
    const std::vector<double> losses =
        batch_gradients(net, batch, threads, [&](const LocNet& m, std::size_t s) {
          const Node g = Node::constant(train[s].values());
          return ops::scale(ops::sse(m.transform(g).warped, train[s].values()), inv);
        });
    double total = 0.0;
    for (double l : losses) total += l;
    if (!std::isfinite(total))
      fail<NumericError>("pretrain_identity: non-finite loss at iteration ", rep.iterations + 1);
    rep.batch_loss.push_back(total);
    adam_step(net.params(), adam);
    ++rep.iterations;
    if (rep.iterations % cfg.check_every == 0 || rep.iterations == cfg.max_iterations)
      rep.converged = check(rep.iterations);
  }
  net.params().zero_grad();
  rep.converged = rep.train_error < cfg.threshold;
  if (!held_out.empty()) rep.eval_error = mean_reproduction_error(net, held_out);
  return rep;
}

}  // namespace invshape
