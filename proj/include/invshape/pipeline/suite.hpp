#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "invshape/cli/image.hpp"
#include "invshape/data/synthetic.hpp"
#include "invshape/pipeline/transform.hpp"

namespace invshape {

// ---------------------------------------------------------------------------
// Target construction

enum class TargetSource { Surrogate, Oracle };

inline TargetSource parse_target_source(const std::string& s) {
  if (s == "surrogate") return TargetSource::Surrogate;
  if (s == "oracle") return TargetSource::Oracle;
  fail<ConfigError>("unknown target source '", s, "' (expected surrogate or oracle)");
}

/// Field of a reference geometry used to derive targets: the surrogate's
/// prediction, or the analytic synthetic flow.
inline GridField reference_field(const GeometryMap& g, const UNet& unet, const Normalization& norm,
                                 TargetSource source, const FlowParams& flow = {}) {
  return source == TargetSource::Oracle ? analytic_field(g, flow) : predict(unet, g, norm);
}

/// Term weights applied on top of the mode's term selection.
struct LossWeights {
  double dp = 1.0, force = 1.0, length = 1.0, height = 1.0, com = 1.0, field = 1.0;

  void apply(PhysicalTargets& t) const {
    t.weight_dp = dp;
    t.weight_force = force;
    t.weight_length = length;
    t.weight_height = height;
    t.weight_com = com;
    t.weight_field = field;
  }
};

// ---------------------------------------------------------------------------
// Experiment suite

struct ExperimentPair {
  std::string name;
  GeometryMap initial;
  GeometryMap target;
};

struct SuiteConfig {
  TransformConfig transform;
  LossWeights weights;
  TargetSource target_source = TargetSource::Surrogate;
  FlowParams flow;  // oracle targets only
};

struct SuiteCell {
  std::size_t pair = 0;
  LossMode mode = LossMode::Constraints;
  bool ok = false;
  std::string error;  // set when !ok
  RunRecord record;   // partial when the run aborted
  /// Mean relative error over Δp and F_1..4 (NaN for failed cells).
  double metric = std::numeric_limits<double>::quiet_NaN();
};

struct SuiteResult {
  std::vector<std::string> pair_names;
  std::vector<LossMode> modes;
  std::vector<SuiteCell> cells;  // pair-major
};

/// Runs every (pair, mode) cell on a private copy of the pretrained
/// localization network. A failing cell is recorded and the suite goes on.
inline SuiteResult run_experiment_suite(const std::vector<ExperimentPair>& pairs,
                                        const std::vector<LossMode>& modes, const UNet& unet,
                                        const Normalization& norm, const LocNet& pretrained,
                                        const SuiteConfig& cfg) {
  if (pairs.empty() || modes.empty()) fail<ConfigError>("run_experiment_suite: no pairs or no modes");
  SuiteResult res;
  res.modes = modes;
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    res.pair_names.push_back(pairs[a].name);
    std::optional<PhysicalTargets> base;
    std::string target_error;
    try {
      const GridField ref = reference_field(pairs[a].target, unet, norm, cfg.target_source, cfg.flow);
      base = targets_from_reference(ref, pairs[a].target, cfg.transform.physics, modes[0]);
    } catch (const Error& e) {
      target_error = e.what();
    }
    for (LossMode mode : modes) {
      SuiteCell cell;
      cell.pair = a;
      cell.mode = mode;
      if (!base) {
        cell.error = target_error;
        res.cells.push_back(std::move(cell));
        continue;
      }
      PhysicalTargets t = *base;
      t.mode = mode;
      cfg.weights.apply(t);
      LocNet loc = pretrained.deep_copy();
      try {
        cell.record = run_transformation(pairs[a].initial, unet, norm, loc, t, cfg.transform);
        cell.ok = true;
        cell.metric = cell.record.constraint_error();
      } catch (const RunAborted& e) {
        cell.error = e.what();
        cell.record = e.record;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      res.cells.push_back(std::move(cell));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Validation and surrogate evaluation

struct QuantityDelta {
  std::string name;
  double oracle = 0;
  double surrogate = 0;
  double target = std::numeric_limits<double>::quiet_NaN();
};

struct ValidationReport {
  PhysicalQuantities oracle, surrogate;
  std::vector<QuantityDelta> quantities;       // delta_p, f_front..f_bottom
  std::vector<TargetComparison> oracle_vs_target;
  std::vector<double> dq_oracle, dq_surrogate;  // continuity profiles
  std::array<double, 3> mre{};                  // surrogate against oracle
};

/// Recomputes Δp and the forces on an externally supplied field for the
/// transformed geometry and compares them with the surrogate and the targets.
inline ValidationReport validate_against_oracle(const GeometryMap& transformed,
                                                const GridField& oracle_field,
                                                const GridField& surrogate_field,
                                                const PhysicalTargets& targets,
                                                const PhysicsConfig& cfg) {
  const Shape expect{transformed.height(), transformed.width(), 3};
  if (oracle_field.values().shape() != expect || surrogate_field.values().shape() != expect)
    fail<ShapeError>("validate_against_oracle: fields ", shape_str(oracle_field.values().shape()),
                     " and ", shape_str(surrogate_field.values().shape()), " vs geometry ",
                     shape_str(expect));
  ValidationReport r;
  r.oracle = compute_quantities(oracle_field, transformed, cfg);
  r.surrogate = compute_quantities(surrogate_field, transformed, cfg);
  auto tgt = [](const std::optional<double>& v) {
    return v ? *v : std::numeric_limits<double>::quiet_NaN();
  };
  r.quantities.push_back({"delta_p", r.oracle.delta_p, r.surrogate.delta_p, tgt(targets.delta_p)});
  for (std::size_t f = 0; f < 4; ++f)
    r.quantities.push_back({std::string("f_") + kFaceNames[f], r.oracle.forces[f],
                            r.surrogate.forces[f], tgt(targets.forces[f])});
  for (const QuantityDelta& q : r.quantities)
    if (!std::isnan(q.target)) r.oracle_vs_target.push_back(compare(q.name, q.oracle, q.target));
  r.dq_oracle = continuity_profile(oracle_field, transformed, cfg);
  r.dq_surrogate = continuity_profile(surrogate_field, transformed, cfg);
  MreAccumulator acc(transformed.width());
  acc.add(surrogate_field, oracle_field, transformed);
  r.mre = acc.report().mre;
  return r;
}

struct SurrogateEvaluation {
  MreReport mre;
  /// Mean over eval samples of |ΔQ(column)| on the prediction, divided by
  /// the sample's inlet flux.
  std::vector<double> dq_profile;
  /// Mean over eval samples of |Δp_pred - Δp_true| (outlet swept over the
  /// columns), divided by the sample's inlet total pressure.
  std::vector<double> dp_profile;
};

inline SurrogateEvaluation evaluate_surrogate(const UNet& net, const Dataset& d,
                                              const PhysicsConfig& cfg = {}) {
  SurrogateEvaluation ev;
  ev.mre = evaluate_mre(net, d);
  const std::size_t W = d.width();
  ev.dq_profile.assign(W, 0.0);
  ev.dp_profile.assign(W, 0.0);
  for (std::size_t s : d.eval) {
    const Sample& smp = d.samples[s];
    const GridField pred = predict(net, smp.geometry, d.normalization);
    const double q_in = column_flux(smp.field, smp.geometry, cfg.inlet_column, cfg);
    PhysicsConfig pc = cfg;
    double p_in = 0.0;
    {
      double u = 0, v = 0, p = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < smp.geometry.height(); ++i)
        if (!smp.geometry.solid(i, cfg.inlet_column)) {
          u += smp.field(i, cfg.inlet_column, GridField::kU);
          v += smp.field(i, cfg.inlet_column, GridField::kV);
          p += smp.field(i, cfg.inlet_column, GridField::kP);
          ++n;
        }
      u /= static_cast<double>(n);
      v /= static_cast<double>(n);
      p /= static_cast<double>(n);
      const double dyn = cfg.standard_dynamic_pressure ? u * u + v * v : (u + v) * (u + v);
      p_in = 0.5 * cfg.rho * dyn + p;
    }
    if (q_in == 0.0 || p_in == 0.0)
      fail<ConfigError>("evaluate_surrogate: zero inlet flux or total pressure in sample ", s);
    for (std::size_t j = cfg.inlet_column + 1; j < W; ++j) {
      ev.dq_profile[j] += std::abs(continuity_residual(pred, smp.geometry, cfg, j)) / std::abs(q_in);
      pc.outlet_column = j;
      const double dp_pred = total_pressure_difference(pred, smp.geometry, pc);
      const double dp_true = total_pressure_difference(smp.field, smp.geometry, pc);
      ev.dp_profile[j] += std::abs(dp_pred - dp_true) / std::abs(p_in);
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(d.eval.size(), 1));
  for (std::size_t j = 0; j < W; ++j) {
    ev.dq_profile[j] /= n;
    ev.dp_profile[j] /= n;
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Serialization

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail<ConfigError>("cannot open '", path.string(), "' for writing");
  out << text;
  if (!out) fail<ConfigError>("write to '", path.string(), "' failed");
}

/// Geometry view stacked over the u/v/p panels of its field.
inline Image render_case(const GeometryMap& g, const GridField* field, const RenderOptions& o = {}) {
  const Image geo = render_geometry(g);
  if (!field) return geo;
  const Image panels = render_panels(*field, &g, o);
  Image out(g.width(), geo.height + o.gap + panels.height, o.gap_color);
  for (std::size_t i = 0; i < geo.height; ++i)
    for (std::size_t j = 0; j < geo.width; ++j) out.at(i, j) = geo.at(i, j);
  for (std::size_t i = 0; i < panels.height; ++i)
    for (std::size_t j = 0; j < panels.width; ++j) out.at(geo.height + o.gap + i, j) = panels.at(i, j);
  return out;
}

/// Run directory:
///   metrics.tsv         iteration, total, one column per enabled term
///   summary.txt         key=value summary incl. achieved-vs-target table
///   initial.pgm         initial geometry
///   final_warped.pgm    continuous warped geometry after the last update
///   final_geometry.pgm  binarized export
///   final_field.ppm     u/v/p panels of the final prediction
///   snapshots/iter_NNNNNN.pgm
inline void write_run_record(const std::filesystem::path& dir, const RunRecord& rec,
                             const RenderOptions& o = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "snapshots");
  std::string m = "iteration\ttotal";
  for (const std::string& n : rec.term_names) m += "\t" + n;
  m += "\n";
  for (const IterationRecord& it : rec.history) {
    m += std::to_string(it.iteration) + "\t" + fmt(it.total);
    for (double v : it.terms) m += "\t" + fmt(v);
    m += "\n";
  }
  write_text(dir / "metrics.tsv", m);

  std::string s;
  s += "mode=" + rec.mode + "\n";
  s += "stop_reason=" + rec.stop_reason + "\n";
  s += "updates=" + std::to_string(rec.updates) + "\n";
  s += "initial_loss=" + fmt(rec.initial_loss) + "\n";
  s += "final_loss=" + fmt(rec.final_loss) + "\n";
  for (std::size_t k = 0; k < rec.term_names.size(); ++k) {
    s += "weight." + rec.term_names[k] + "=" + fmt(rec.term_weights[k]) + "\n";
    if (k < rec.final_terms.size()) s += "final_term." + rec.term_names[k] + "=" + fmt(rec.final_terms[k]) + "\n";
  }
  for (const TargetComparison& c : rec.comparisons) {
    s += "achieved." + c.name + "=" + fmt(c.achieved) + "\n";
    s += "target." + c.name + "=" + fmt(c.target) + "\n";
    s += (c.absolute ? "abs_error." : "rel_error.") + c.name + "=" + fmt(c.error) + "\n";
  }
  if (!rec.comparisons.empty()) s += "constraint_error=" + fmt(rec.constraint_error()) + "\n";
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(rec.unet_fingerprint_before));
  s += std::string("unet_fingerprint_before=") + hash + "\n";
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(rec.unet_fingerprint_after));
  s += std::string("unet_fingerprint_after=") + hash + "\n";
  write_text(dir / "summary.txt", s);

  if (rec.initial_geometry.height() > 0) write_pgm(dir / "initial.pgm", rec.initial_geometry);
  for (const auto& [it, g] : rec.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%06zu.pgm", it);
    write_pgm(dir / "snapshots" / name, g);
  }
  if (rec.final_warped.height() > 0) {
    write_pgm(dir / "final_warped.pgm", rec.final_warped);
    write_pgm(dir / "final_geometry.pgm", rec.final_geometry);
    write_ppm(dir / "final_field.ppm", render_panels(rec.final_field, &rec.final_geometry, o));
  }
}

/// Suite directory: results.tsv (one row per cell), cell_<pair>_<mode>/
/// run records, and panels_<pair>.ppm laid out as initial | one column per
/// mode | target, each column a geometry above its u/v/p panels.
inline void write_suite(const std::filesystem::path& dir, const SuiteResult& res,
                        const std::vector<ExperimentPair>& pairs, const UNet& unet,
                        const Normalization& norm, const RenderOptions& o = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string t = "pair\tmode\tstatus\tconstraint_error\tinitial_loss\tfinal_loss\terror\n";
  auto mode_tag = [](LossMode m) {
    std::string s = to_string(m);
    for (char& c : s)
      if (c == '+') c = '_';
    return s;
  };
  for (const SuiteCell& c : res.cells) {
    const std::string& pname = res.pair_names[c.pair];
    t += pname + "\t" + to_string(c.mode) + "\t" + (c.ok ? "ok" : "failed") + "\t" +
         fmt(c.metric) + "\t" + fmt(c.ok ? c.record.initial_loss : NAN) + "\t" +
         fmt(c.ok ? c.record.final_loss : NAN) + "\t" + c.error + "\n";
    write_run_record(dir / ("cell_" + pname + "_" + mode_tag(c.mode)), c.record, o);
  }
  write_text(dir / "results.tsv", t);

  for (std::size_t a = 0; a < pairs.size(); ++a) {
    std::vector<Image> cols;
    const GridField fi = predict(unet, pairs[a].initial, norm);
    cols.push_back(render_case(pairs[a].initial, &fi, o));
    for (const SuiteCell& c : res.cells) {
      if (c.pair != a) continue;
      if (c.ok) cols.push_back(render_case(c.record.final_geometry, &c.record.final_field, o));
      else cols.push_back(Image(cols.front().width, cols.front().height, {128, 128, 128}));
    }
    const GridField ft = predict(unet, pairs[a].target, norm);
    cols.push_back(render_case(pairs[a].target, &ft, o));
    write_ppm(dir / ("panels_" + res.pair_names[a] + ".ppm"), hconcat(cols, o.gap));
  }
}

}  // namespace invshape
