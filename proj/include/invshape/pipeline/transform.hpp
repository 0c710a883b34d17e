#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "invshape/core/adam.hpp"
#include "invshape/physics/loss.hpp"
#include "invshape/stn/locnet.hpp"
#include "invshape/unet/train.hpp"

namespace invshape {

struct TransformConfig {
  double learning_rate = 1e-5;
  std::size_t iterations = 2000;
  /// Stop once the best loss improved by less than `plateau_tolerance`
  /// (relative) over the last `plateau_window` iterations; 0 disables.
  std::size_t plateau_window = 200;
  double plateau_tolerance = 1e-6;
  std::size_t snapshot_every = 0;  // 0 keeps no intermediate snapshots
  PhysicsConfig physics;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based; iteration k evaluates the state after k-1 updates
  double total = 0;
  std::vector<double> terms;  // unweighted, in RunRecord::term_names order
};

/// Achieved value of a physical quantity against its target. The relative
/// error is |achieved - target| / |target|; for a zero target (|target| below
/// kZeroTarget, which also catches round-off around symmetric centroids) the
/// absolute deviation is reported instead.
struct TargetComparison {
  std::string name;
  double achieved = 0;
  double target = 0;
  double error = 0;
  bool absolute = false;
};

inline constexpr double kZeroTarget = 1e-12;

inline TargetComparison compare(std::string name, double achieved, double target) {
  TargetComparison c{std::move(name), achieved, target, std::abs(achieved - target),
                     std::abs(target) < kZeroTarget};
  if (!c.absolute) c.error /= std::abs(target);
  return c;
}

struct RunRecord {
  std::string mode;
  std::vector<std::string> term_names;
  std::vector<double> term_weights;
  std::vector<IterationRecord> history;
  std::vector<std::pair<std::size_t, GeometryMap>> snapshots;
  GeometryMap initial_geometry;
  GeometryMap final_warped;    // continuous map seen by the surrogate
  GeometryMap final_geometry;  // binarized export
  GridField final_field;       // denormalized prediction for final_warped
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> final_terms;
  PhysicalQuantities achieved;
  std::vector<TargetComparison> comparisons;
  std::size_t updates = 0;
  std::string stop_reason;
  std::uint64_t unet_fingerprint_before = 0;
  std::uint64_t unet_fingerprint_after = 0;

  /// Mean relative error over Δp and the four forces.
  double constraint_error() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const TargetComparison& c : comparisons)
      if (c.name == "delta_p" || c.name.rfind("f_", 0) == 0) {
        s += c.error;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// Raised when the loss becomes non-finite; carries the partial record with
/// a snapshot of the geometry at the failing iteration.
class RunAborted : public NumericError {
 public:
  RunAborted(const std::string& msg, RunRecord rec) : NumericError(msg), record(std::move(rec)) {}
  RunRecord record;
};

namespace detail {

struct StepEval {
  StnOutput stn;
  Node field;  // denormalized
  LossBreakdown loss;
};

inline StepEval evaluate_step(const GeometryMap& g0, const UNet& unet, const Normalization& norm,
                              const LocNet& loc, const PhysicalTargets& targets,
                              const PhysicsConfig& physics) {
  StepEval e;
  e.stn = loc.transform(Node::constant(g0.values()));
  e.field = norm.denormalize(unet.forward(e.stn.warped));
  e.loss = total_loss(e.field, e.stn.warped, targets, physics);
  return e;
}

inline std::vector<double> term_values(const LossBreakdown& b) {
  std::vector<double> v;
  for (const LossTerm& t : b.terms) v.push_back(t.value);
  return v;
}

inline void fill_comparisons(RunRecord& rec, const PhysicalTargets& t) {
  const PhysicalQuantities& q = rec.achieved;
  auto add = [&](const char* name, double achieved, const std::optional<double>& target) {
    if (target) rec.comparisons.push_back(compare(name, achieved, *target));
  };
  add("delta_p", q.delta_p, t.delta_p);
  for (std::size_t f = 0; f < 4; ++f)
    add((std::string("f_") + kFaceNames[f]).c_str(), q.forces[f], t.forces[f]);
  add("length", q.length, t.length);
  add("height", q.height, t.height);
  add("com_x", q.com_x, t.com_x);
  add("com_y", q.com_y, t.com_y);
}

}  // namespace detail

/// Shape optimization: per iteration theta = loc(G0), U = sample(G0, TPS(theta)),
/// V = unet(U), loss = total_loss(denormalize(V), U); Adam updates the
/// localization network only. The U-Net must be frozen.
inline RunRecord run_transformation(const GeometryMap& g_init, const UNet& unet,
                                    const Normalization& norm, LocNet& loc,
                                    const PhysicalTargets& targets, const TransformConfig& cfg) {
  if (!unet.frozen())
    fail<ConfigError>("run_transformation: U-Net parameters must be frozen before optimizing");
  if (norm.empty()) fail<ConfigError>("run_transformation: missing output normalization");
  if (!(cfg.learning_rate >= 0.0)) fail<ConfigError>("run_transformation: learning rate must be >= 0");
  if (cfg.iterations == 0) fail<ConfigError>("run_transformation: iterations must be >= 1");
  if (!is_binary(g_init))
    fail<ConfigError>("run_transformation: initial geometry must be binary");

  RunRecord rec;
  rec.mode = to_string(targets.mode);
  rec.initial_geometry = g_init;
  rec.unet_fingerprint_before = unet.params().fingerprint();
  AdamState adam(loc.params(), AdamConfig{cfg.learning_rate});
  std::vector<double> best;  // best total up to each iteration
  rec.stop_reason = "iteration budget";

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    loc.params().zero_grad();
    detail::StepEval e = detail::evaluate_step(g_init, unet, norm, loc, targets, cfg.physics);
    if (rec.term_names.empty())
      for (const LossTerm& t : e.loss.terms) {
        rec.term_names.push_back(t.name);
        rec.term_weights.push_back(t.weight);
      }
    const double total = e.loss.total_value();
    rec.history.push_back({it, total, detail::term_values(e.loss)});
    const GeometryMap warped(e.stn.warped.value());
    if (!std::isfinite(total)) {
      rec.snapshots.emplace_back(it, warped);
      rec.stop_reason = "non-finite loss";
      rec.unet_fingerprint_after = unet.params().fingerprint();
      throw RunAborted(detail::concat("run_transformation: non-finite loss at iteration ", it),
                       std::move(rec));
    }
    if (cfg.snapshot_every > 0 && (it - 1) % cfg.snapshot_every == 0)
      rec.snapshots.emplace_back(it, warped);
    best.push_back(best.empty() ? total : std::min(best.back(), total));
    if (total == 0.0) {
      rec.stop_reason = "zero loss";
      break;
    }
    if (cfg.plateau_window > 0 && best.size() > cfg.plateau_window) {
      const double then = best[best.size() - 1 - cfg.plateau_window];
      if ((then - best.back()) <= cfg.plateau_tolerance * std::abs(then)) {
        rec.stop_reason = "plateau";
        break;
      }
    }
    backward(e.loss.total);
    adam_step(loc.params(), adam);
    ++rec.updates;
  }
  loc.params().zero_grad();
  rec.initial_loss = rec.history.front().total;

  // State after the last update.
  const detail::StepEval fin = detail::evaluate_step(g_init, unet, norm, loc, targets, cfg.physics);
  rec.final_loss = fin.loss.total_value();
  rec.final_terms = detail::term_values(fin.loss);
  rec.final_warped = GeometryMap(fin.stn.warped.value());
  rec.final_geometry = binarize_geometry(rec.final_warped);
  rec.final_field = GridField(fin.field.value());
  rec.achieved = compute_quantities(rec.final_field, rec.final_warped, cfg.physics);
  detail::fill_comparisons(rec, targets);
  rec.unet_fingerprint_after = unet.params().fingerprint();
  if (rec.unet_fingerprint_after != rec.unet_fingerprint_before)
    fail<Error>("run_transformation: U-Net parameters changed during optimization");
  return rec;
}

}  // namespace invshape
