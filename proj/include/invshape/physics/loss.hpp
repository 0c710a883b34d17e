#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "invshape/physics/physics.hpp"

namespace invshape {

enum class LossMode { Constraints, ConstraintsGeometry, FieldSse };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::Constraints: return "constraints";
    case LossMode::ConstraintsGeometry: return "constraints+geometry";
    case LossMode::FieldSse: return "field_sse";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "constraints") return LossMode::Constraints;
  if (s == "constraints+geometry") return LossMode::ConstraintsGeometry;
  if (s == "field_sse") return LossMode::FieldSse;
  fail<ConfigError>("unknown loss mode '", s, "' (expected constraints, constraints+geometry or field_sse)");
}

/// Target values and weights of the optimization loss. Which terms take
/// part is decided by the mode; a term with weight 0 is dropped.
struct PhysicalTargets {
  LossMode mode = LossMode::Constraints;
  std::optional<double> delta_p;
  std::array<std::optional<double>, 4> forces;
  std::optional<double> length, height, com_x, com_y;
  std::optional<Array> field;  // denormalized H x W x 3, field_sse mode

  double weight_dp = 1.0;
  double weight_force = 1.0;
  double weight_length = 1.0;
  double weight_height = 1.0;
  double weight_com = 1.0;
  double weight_field = 1.0;
};

/// Fills every target from a reference field and geometry.
inline PhysicalTargets targets_from_reference(const GridField& field, const GeometryMap& g,
                                              const PhysicsConfig& cfg, LossMode mode) {
  const PhysicalQuantities q = compute_quantities(field, g, cfg);
  PhysicalTargets t;
  t.mode = mode;
  t.delta_p = q.delta_p;
  for (std::size_t f = 0; f < 4; ++f) t.forces[f] = q.forces[f];
  t.length = q.length;
  t.height = q.height;
  t.com_x = q.com_x;
  t.com_y = q.com_y;
  t.field = field.values();
  return t;
}

struct LossTerm {
  std::string name;
  double weight = 0;
  double achieved = 0;
  double target = 0;
  double value = 0;  // unweighted squared deviation (sum of squares for the field term)
};

struct LossBreakdown {
  Node total;
  std::vector<LossTerm> terms;

  double total_value() const { return total.value()[0]; }
};

/// Weighted sum of squared deviations of the enabled terms:
/// w_dp (Δp - Δp*)^2 + w_F Σ (F_i - F_i*)^2 [+ w_L (L - L*)^2 + w_H (H - H*)^2
/// + w_COM |COM - COM*|^2], or w_field SSE(field, field*) in field_sse mode.
/// `field` is denormalized; surface masks come from the thresholded geometry.
inline LossBreakdown total_loss(const Node& field, const Node& geometry,
                                const PhysicalTargets& t, const PhysicsConfig& cfg) {
  for (double w : {t.weight_dp, t.weight_force, t.weight_length, t.weight_height, t.weight_com,
                   t.weight_field})
    if (!(w >= 0.0)) fail<ConfigError>("total_loss: weights must be >= 0, got ", w);
  const GeometryMap g(geometry.value());
  LossBreakdown out;
  std::vector<Node> parts;
  auto add_term = [&](const std::string& name, const Node& achieved,
                      const std::optional<double>& target, double weight) {
    if (weight == 0.0) return;
    if (!target) fail<ConfigError>("total_loss: term '", name, "' is enabled but has no target");
    const Node dev = ops::square(ops::add_scalar(achieved, -*target));
    parts.push_back(ops::scale(dev, weight));
    out.terms.push_back({name, weight, achieved.value()[0], *target, dev.value()[0]});
  };

  if (t.mode == LossMode::FieldSse) {
    if (t.weight_field > 0.0) {
      if (!t.field) fail<ConfigError>("total_loss: term 'field' is enabled but has no target");
      const Node dev = ops::sse(field, *t.field);
      parts.push_back(ops::scale(dev, t.weight_field));
      out.terms.push_back({"field", t.weight_field, dev.value()[0], 0.0, dev.value()[0]});
    }
  } else {
    if (t.weight_dp > 0.0) add_term("delta_p", total_pressure_difference(field, g, cfg), t.delta_p, t.weight_dp);
    if (t.weight_force > 0.0) {
      const auto forces = surface_forces(field, extract_surfaces(g), cfg);
      for (std::size_t f = 0; f < 4; ++f)
        add_term(std::string("f_") + kFaceNames[f], forces[f], t.forces[f], t.weight_force);
    }
    if (t.mode == LossMode::ConstraintsGeometry) {
      const GeometryMoments m = geometry_moments(geometry, cfg.beta);
      add_term("length", m.length, t.length, t.weight_length);
      add_term("height", m.height, t.height, t.weight_height);
      add_term("com_x", m.com_x, t.com_x, t.weight_com);
      add_term("com_y", m.com_y, t.com_y, t.weight_com);
    }
  }
  if (parts.empty()) fail<ConfigError>("total_loss: no term has a positive weight");
  Node total = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) total = ops::add(total, parts[k]);
  out.total = total;
  return out;
}

// ---------------------------------------------------------------------------
// Targets file: one key=value per line, '#' starts a comment.

struct TargetsFile {
  PhysicalTargets targets;
  /// Geometry whose predicted (or oracle) field supplies any target not
  /// given explicitly.
  std::optional<std::string> reference_geometry;
  std::string reference_source = "surrogate";  // or "oracle"
};

inline TargetsFile parse_targets(std::istream& in, const std::string& name = "targets") {
  TargetsFile tf;
  PhysicalTargets& t = tf.targets;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail<FormatError>(name, ":", lineno, ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) fail<FormatError>(name, ":", lineno, ": empty key or value");
    if (!seen.insert(key).second) fail<FormatError>(name, ":", lineno, ": duplicate key '", key, "'");
    auto number = [&]() {
      char* end = nullptr;
      const double v = std::strtod(val.c_str(), &end);
      if (end == val.c_str() || *end != '\0' || !std::isfinite(v))
        fail<FormatError>(name, ":", lineno, ": '", key, "' needs a finite number, got '", val, "'");
      return v;
    };
    auto weight = [&]() {
      const double v = number();
      if (v < 0.0) fail<FormatError>(name, ":", lineno, ": weight '", key, "' must be >= 0");
      return v;
    };
    if (key == "mode") {
      try {
        t.mode = parse_loss_mode(val);
      } catch (const ConfigError& e) {
        fail<FormatError>(name, ":", lineno, ": ", e.what());
      }
    } else if (key == "delta_p") t.delta_p = number();
    else if (key == "f_front") t.forces[kFront] = number();
    else if (key == "f_back") t.forces[kBack] = number();
    else if (key == "f_top") t.forces[kTop] = number();
    else if (key == "f_bottom") t.forces[kBottom] = number();
    else if (key == "length") t.length = number();
    else if (key == "height") t.height = number();
    else if (key == "com_x") t.com_x = number();
    else if (key == "com_y") t.com_y = number();
    else if (key == "weight_dp") t.weight_dp = weight();
    else if (key == "weight_f") t.weight_force = weight();
    else if (key == "weight_length") t.weight_length = weight();
    else if (key == "weight_height") t.weight_height = weight();
    else if (key == "weight_com") t.weight_com = weight();
    else if (key == "weight_field") t.weight_field = weight();
    else if (key == "reference_geometry") tf.reference_geometry = val;
    else if (key == "reference_source") {
      if (val != "surrogate" && val != "oracle")
        fail<FormatError>(name, ":", lineno, ": reference_source must be surrogate or oracle");
      tf.reference_source = val;
    } else {
      fail<FormatError>(name, ":", lineno, ": unknown key '", key, "'");
    }
  }
  return tf;
}

/// Copies every target that `explicit_t` leaves unset from `reference`.
inline PhysicalTargets merge_targets(PhysicalTargets explicit_t, const PhysicalTargets& reference) {
  auto fill = [](std::optional<double>& dst, const std::optional<double>& src) {
    if (!dst) dst = src;
  };
  fill(explicit_t.delta_p, reference.delta_p);
  for (std::size_t f = 0; f < 4; ++f) fill(explicit_t.forces[f], reference.forces[f]);
  fill(explicit_t.length, reference.length);
  fill(explicit_t.height, reference.height);
  fill(explicit_t.com_x, reference.com_x);
  fill(explicit_t.com_y, reference.com_y);
  if (!explicit_t.field) explicit_t.field = reference.field;
  return explicit_t;
}

}  // namespace invshape
