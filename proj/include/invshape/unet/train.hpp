#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

#include "invshape/core/adam.hpp"
#include "invshape/core/checkpoint.hpp"
#include "invshape/core/parallel.hpp"
#include "invshape/data/dataset.hpp"
#include "invshape/unet/unet.hpp"

namespace invshape {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty disables checkpointing
  std::size_t patience = 0;              // epochs without eval improvement; 0 disables
  std::size_t threads = 1;               // 0 selects INVSHAPE_THREADS / hardware
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;  // mean per-sample SSE over the epoch
  double eval_loss = 0;   // mean per-sample SSE over the eval split (NaN if empty)
};

// ---------------------------------------------------------------------------
// Checkpoints

// 'UNW1' parameter layout, optionally followed by the normalization that
// maps the network output back to physical units: 'NRM1', u32 C, then
// C x (f64 min, f64 max).
inline std::vector<unsigned char> encode_unet(const UNet& net, const Normalization* norm = nullptr) {
  std::vector<unsigned char> bytes = encode_params(net.params(), "UNW1");
  if (norm && !norm->empty()) {
    io::ByteWriter w;
    w.magic("NRM1");
    w.u32(static_cast<std::uint32_t>(norm->channels.size()));
    for (const ChannelRange& r : norm->channels) {
      w.f64(r.min);
      w.f64(r.max);
    }
    bytes.insert(bytes.end(), w.bytes().begin(), w.bytes().end());
  }
  return bytes;
}

/// A trained network together with its output normalization.
struct Surrogate {
  UNet net;
  Normalization normalization;
};

/// Rebuilds the architecture from the stored layer shapes.
inline Surrogate decode_surrogate(const std::vector<unsigned char>& bytes,
                                  const std::string& name = "unet") {
  io::ByteReader r(bytes, name);
  r.expect_magic("UNW1");
  std::vector<Array> arrays = decode_arrays(r);
  if (arrays.size() < 14 || (arrays.size() - 4) % 10 != 0 || arrays.front().rank() != 4)
    fail<FormatError>(name, ": ", arrays.size(), " layers do not describe a U-Net");
  UNetConfig cfg;
  cfg.depth = (arrays.size() - 4) / 10;
  cfg.in_channels = arrays.front().dim(2);
  cfg.base_channels = arrays.front().dim(3);
  cfg.out_channels = arrays[arrays.size() - 2].dim(3);
  Surrogate s{UNet(cfg, 0), {}};
  assign_arrays(s.net.params(), std::move(arrays), name);
  if (r.remaining() > 0) {
    r.expect_magic("NRM1");
    const std::size_t C = r.u32("channel count");
    if (C != cfg.out_channels)
      fail<FormatError>(name, ": normalization has ", C, " channels, network emits ",
                        cfg.out_channels);
    for (std::size_t c = 0; c < C; ++c) {
      const double lo = r.f64("normalization min");
      const double hi = r.f64("normalization max");
      s.normalization.channels.push_back({lo, hi});
    }
    if (r.remaining() != 0) fail<FormatError>(name, ": ", r.remaining(), " trailing bytes");
  }
  return s;
}

inline UNet decode_unet(const std::vector<unsigned char>& bytes, const std::string& name = "unet") {
  return decode_surrogate(bytes, name).net;
}

inline void save_unet(const std::filesystem::path& path, const UNet& net,
                      const Normalization* norm = nullptr) {
  io::write_file(path, encode_unet(net, norm));
}

inline UNet load_unet(const std::filesystem::path& path) {
  return decode_unet(io::read_file(path), path.string());
}

inline Surrogate load_surrogate(const std::filesystem::path& path) {
  return decode_surrogate(io::read_file(path), path.string());
}

/// Hash of the serialized checkpoint bytes.
inline std::uint64_t checkpoint_hash(const UNet& net) { return io::fnv1a(encode_unet(net)); }

// ---------------------------------------------------------------------------
// Training

/// Denormalized prediction for one geometry.
inline GridField predict(const UNet& net, const GeometryMap& g, const Normalization& norm) {
  return GridField(norm.denormalize(net.forward(g).value()));
}

/// Epoch-wise Adam training on the SSE loss at network scale. The state
/// (optimizer moments, epoch counter) can be checkpointed and resumed.
class UNetTrainer {
 public:
  UNetTrainer(UNet& net, const Dataset& data, TrainConfig cfg)
      : net_(net), data_(data), cfg_(std::move(cfg)) {
    if (data_.normalization.empty()) fail<ConfigError>("train_unet: dataset is not normalized");
    if (data_.train.empty()) fail<ConfigError>("train_unet: training split is empty");
    if (cfg_.batch_size == 0) fail<ConfigError>("train_unet: batch_size must be >= 1");
    adam_ = AdamState(net_.params(), AdamConfig{cfg_.learning_rate});
    targets_.resize(data_.size());
    for (std::size_t s : data_.train) targets_[s] = data_.normalization.normalize(data_.samples[s].field.values());
    for (std::size_t s : data_.eval) targets_[s] = data_.normalization.normalize(data_.samples[s].field.values());
  }

  std::size_t epochs_done() const { return epoch_; }
  const AdamState& optimizer() const { return adam_; }

  EpochStats run_epoch() {
    ++epoch_;
    std::vector<std::size_t> order = data_.train;
    Rng rng(cfg_.seed * 0x9E3779B97F4A7C15ull + epoch_);
    shuffle(order, rng);
    const std::size_t threads = resolve_threads(cfg_.threads);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
      const std::vector<std::size_t> batch(
          order.begin() + static_cast<long>(start),
          order.begin() + static_cast<long>(std::min(order.size(), start + cfg_.batch_size)));
      net_.params().zero_grad();
      const std::vector<double> losses =
          batch_gradients(net_, batch, threads, [&](const UNet& m, std::size_t s) {
            return sse_loss(m.forward(data_.samples[s].geometry), targets_[s]);
          });
      for (double l : losses) {
        if (!std::isfinite(l))
          fail<NumericError>("train_unet: non-finite loss at epoch ", epoch_, " batch ",
                             batch_index);
        total += l;
      }
      if (net_.params().any_trainable()) adam_step(net_.params(), adam_);
    }
    net_.params().zero_grad();
    EpochStats st{epoch_, total / static_cast<double>(order.size()), eval_loss()};
    if (!cfg_.checkpoint_dir.empty()) save_checkpoint(cfg_.checkpoint_dir);
    return st;
  }

  /// Mean per-sample SSE on the eval split at network scale.
  double eval_loss() const {
    if (data_.eval.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (std::size_t s : data_.eval)
      total += sse_loss(net_.forward(data_.samples[s].geometry).value(), targets_[s]);
    return total / static_cast<double>(data_.eval.size());
  }

  void save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_unet(dir / "unet.ckpt", net_, &data_.normalization);
    io::write_file(dir / "trainer.state", encode_adam(adam_, static_cast<std::uint32_t>(epoch_)));
  }

  /// Restores parameters and optimizer state written by save_checkpoint().
  void resume(const std::filesystem::path& dir) {
    Surrogate saved = load_surrogate(dir / "unet.ckpt");
    net_.params().copy_values_from(saved.net.params());
    std::uint32_t epoch = 0;
    AdamState s = decode_adam(io::read_file(dir / "trainer.state"), epoch,
                              (dir / "trainer.state").string());
    if (s.first_moment.size() != net_.params().size())
      fail<FormatError>("resume: optimizer state does not match the model");
    s.config.learning_rate = cfg_.learning_rate;
    adam_ = std::move(s);
    epoch_ = epoch;
  }

 private:
  UNet& net_;
  const Dataset& data_;
  TrainConfig cfg_;
  AdamState adam_;
  std::vector<Array> targets_;
  std::size_t epoch_ = 0;
};

/// Trains for `cfg.epochs` epochs, stopping early when the eval loss has not
/// improved for `cfg.patience` epochs or when `on_epoch` returns false.
inline std::vector<EpochStats> train_unet(UNet& net, const Dataset& data, const TrainConfig& cfg,
                                          const std::function<bool(const EpochStats&)>& on_epoch = {}) {
  if (cfg.epochs == 0) fail<ConfigError>("train_unet: epochs must be >= 1");
  UNetTrainer trainer(net, data, cfg);
  std::vector<EpochStats> history;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    history.push_back(trainer.run_epoch());
    const EpochStats& st = history.back();
    if (on_epoch && !on_epoch(st)) break;
    if (cfg.patience > 0 && std::isfinite(st.eval_loss)) {
      if (st.eval_loss < best) {
        best = st.eval_loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return history;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MreReport {
  std::array<double, 3> mre{};                    // u, v, p
  std::array<std::vector<double>, 3> column_mre;  // per column, averaged over rows and samples
  std::size_t samples = 0;
};

namespace detail {

inline double column_fluid_mean(const GridField& f, const GeometryMap& g, std::size_t col,
                                std::size_t channel) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.height(); ++i)
    if (!g.solid(i, col)) {
      s += f(i, col, channel);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace detail

/// Relative error references of one sample: the mean inlet u for the
/// velocity channels and the mean outlet p for the pressure channel.
inline std::array<double, 3> mre_references(const GridField& truth, const GeometryMap& g) {
  const double u_ref = std::abs(detail::column_fluid_mean(truth, g, 0, GridField::kU));
  const double p_ref = std::abs(detail::column_fluid_mean(truth, g, truth.width() - 1, GridField::kP));
  return {u_ref, u_ref, p_ref};
}

/// Accumulates |prediction - truth| / reference over the given samples.
class MreAccumulator {
 public:
  explicit MreAccumulator(std::size_t width) {
    for (auto& c : sums_) c.assign(width, 0.0);
  }

  void add(const GridField& pred, const GridField& truth, const GeometryMap& g) {
    if (pred.values().shape() != truth.values().shape())
      fail<ShapeError>("evaluate_mre: prediction ", shape_str(pred.values().shape()),
                       " vs truth ", shape_str(truth.values().shape()));
    const auto ref = mre_references(truth, g);
    static const char* names[3] = {"u", "v", "p"};
    for (std::size_t c = 0; c < 3; ++c)
      if (!(ref[c] > 0.0)) fail<NumericError>("evaluate_mre: zero reference value for channel ", names[c]);
    for (std::size_t i = 0; i < truth.height(); ++i)
      for (std::size_t j = 0; j < truth.width(); ++j)
        for (std::size_t c = 0; c < 3; ++c)
          sums_[c][j] += std::abs(pred(i, j, c) - truth(i, j, c)) / ref[c];
    rows_ = truth.height();
    ++samples_;
  }

  MreReport report() const {
    MreReport r;
    r.samples = samples_;
    const double per_col = static_cast<double>(rows_ * samples_);
    for (std::size_t c = 0; c < 3; ++c) {
      r.column_mre[c].resize(sums_[c].size());
      double total = 0.0;
      for (std::size_t j = 0; j < sums_[c].size(); ++j) {
        r.column_mre[c][j] = samples_ ? sums_[c][j] / per_col : 0.0;
        total += sums_[c][j];
      }
      r.mre[c] = samples_ ? total / (per_col * static_cast<double>(sums_[c].size())) : 0.0;
    }
    return r;
  }

 private:
  std::array<std::vector<double>, 3> sums_;
  std::size_t rows_ = 0;
  std::size_t samples_ = 0;
};

/// Mean relative error per channel on denormalized fields of the eval split,
/// with each sample's own inlet/outlet references.
inline MreReport evaluate_mre(const UNet& net, const Dataset& d) {
  if (d.eval.empty()) fail<ConfigError>("evaluate_mre: eval split is empty");
  if (d.channels() != 3) fail<ShapeError>("evaluate_mre: expects (u, v, p) fields");
  MreAccumulator acc(d.width());
  for (std::size_t s : d.eval) {
    const Sample& smp = d.samples[s];
    acc.add(predict(net, smp.geometry, d.normalization), smp.field, smp.geometry);
  }
  return acc.report();
}

}  // namespace invshape
