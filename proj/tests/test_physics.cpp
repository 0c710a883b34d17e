#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "invshape/physics/loss.hpp"
#include "support.hpp"

using namespace invshape;
using invshape::testing::block;
using invshape::testing::check_gradients;
using invshape::testing::random_array;

namespace {

GridField uniform_field(std::size_t H, std::size_t W, double u, double v, double p) {
  GridField f(H, W, 3);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      f(i, j, 0) = u;
      f(i, j, 1) = v;
      f(i, j, 2) = p;
    }
  return f;
}

void set_column(GridField& f, std::size_t j, double u, double v, double p) {
  for (std::size_t i = 0; i < f.height(); ++i) {
    f(i, j, 0) = u;
    f(i, j, 1) = v;
    f(i, j, 2) = p;
  }
}

PhysicalTargets parse(const std::string& text) {
  std::istringstream in(text);
  return parse_targets(in).targets;
}

}  // namespace

// Δp ---------------------------------------------------------------------------

TEST(PressureDifference, UniformFieldIsZero) {
  const GeometryMap g = block(8, 16, 2, 5, 6, 9);
  GridField f = uniform_field(8, 16, 0.7, -0.2, 1.3);
  zero_solid(f, g);
  EXPECT_EQ(total_pressure_difference(f, g, PhysicsConfig{}), 0.0);
}

TEST(PressureDifference, HandCases) {
  const GeometryMap g(4, 6);
  GridField f(4, 6, 3);
  set_column(f, 0, 1, 0, 1);
  set_column(f, 5, 2, 0, 1);
  EXPECT_NEAR(total_pressure_difference(f, g, PhysicsConfig{}), 1.5, 1e-12);

  GridField h(4, 6, 3);
  set_column(h, 0, 1, 1, 0);
  PhysicsConfig rho2;
  rho2.rho = 2.0;
  EXPECT_NEAR(total_pressure_difference(h, g, rho2), -4.0, 1e-12);
  rho2.standard_dynamic_pressure = true;  // rho/2 (1 + 1) = 2
  EXPECT_NEAR(total_pressure_difference(h, g, rho2), -2.0, 1e-12);
}

TEST(PressureDifference, BoundaryMeansSkipSolids) {
  GeometryMap g(4, 6);
  g(0, 0) = 1.0;
  GridField f(4, 6, 3);
  set_column(f, 0, 0, 0, 1);
  f(0, 0, 2) = 100.0;  // on a solid pixel, must be ignored
  EXPECT_NEAR(total_pressure_difference(f, g, PhysicsConfig{}), -1.0, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) g(i, 5) = 1.0;
  EXPECT_THROW(total_pressure_difference(f, g, PhysicsConfig{}), ConfigError);
}

TEST(PressureDifference, PressureShifts) {
  Rng rng(1);
  const GeometryMap g = block(8, 16, 3, 5, 7, 10);
  GridField f(random_array({8, 16, 3}, rng));
  zero_solid(f, g);
  const double base = total_pressure_difference(f, g, PhysicsConfig{});
  GridField all = f, out = f;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 16; ++j) all(i, j, 2) += 0.75;
    out(i, 15, 2) += 0.75;
  }
  EXPECT_NEAR(total_pressure_difference(all, g, PhysicsConfig{}), base, 1e-12);
  EXPECT_NEAR(total_pressure_difference(out, g, PhysicsConfig{}) - base, 0.75, 1e-12);
}

TEST(PressureDifference, ConfigValidated) {
  const GeometryMap g(4, 6);
  const GridField f(4, 6, 3);
  PhysicsConfig c;
  c.rho = 0.0;
  EXPECT_THROW(total_pressure_difference(f, g, c), ConfigError);
  c = PhysicsConfig{};
  c.inlet_column = 3;
  c.outlet_column = 2;
  EXPECT_THROW(total_pressure_difference(f, g, c), ConfigError);
  EXPECT_THROW(total_pressure_difference(GridField(4, 5, 3), g, PhysicsConfig{}), ShapeError);
}

// Surfaces and forces -------------------------------------------------------------

TEST(Surfaces, RectangleFaces) {
  const GeometryMap g = block(12, 20, 3, 8, 6, 10);  // h = 5, w = 4
  const SurfaceMask m = extract_surfaces(g);
  EXPECT_EQ(m.faces[kFront].size(), 5u);
  EXPECT_EQ(m.faces[kBack].size(), 5u);
  EXPECT_EQ(m.faces[kTop].size(), 4u);
  EXPECT_EQ(m.faces[kBottom].size(), 4u);
  for (std::size_t k : m.faces[kFront]) EXPECT_EQ(k % 20, 5u);
  for (std::size_t k : m.faces[kTop]) EXPECT_EQ(k / 20, 2u);
}

TEST(Surfaces, FullChannelBlock) {
  const GeometryMap g = block(8, 16, 0, 8, 5, 7);
  const SurfaceMask m = extract_surfaces(g);
  EXPECT_EQ(m.faces[kFront].size(), 8u);
  EXPECT_EQ(m.faces[kBack].size(), 8u);
  EXPECT_TRUE(m.faces[kTop].empty());
  EXPECT_TRUE(m.faces[kBottom].empty());
  EXPECT_THROW(extract_surfaces(GeometryMap(8, 16)), ConfigError);
}

TEST(SurfaceForces, UniformPressure) {
  const std::size_t H = 16;
  const GeometryMap g = block(H, 32, 4, 11, 10, 15);  // h = 7
  const double p0 = 1.7;
  GridField f = uniform_field(H, 32, 0, 0, p0);
  zero_solid(f, g);
  const auto F = surface_forces(f, extract_surfaces(g), PhysicsConfig{});
  const double edge = 1.0 / static_cast<double>(H);
  EXPECT_NEAR(F[kFront], p0 * 7 * edge, 1e-12);
  EXPECT_NEAR(F[kBack], p0 * 7 * edge, 1e-12);
  EXPECT_NEAR(F[kTop], p0 * 5 * edge, 1e-12);
  PhysicsConfig c;
  c.pixel_edge = 0.25;
  EXPECT_NEAR(surface_forces(f, extract_surfaces(g), c)[kFront], p0 * 7 * 0.25, 1e-12);
  const auto Z = surface_forces(GridField(H, 32, 3), extract_surfaces(g), PhysicsConfig{});
  for (double z : Z) EXPECT_EQ(z, 0.0);
}

TEST(SurfaceForces, LinearPressureOnVerticalFace) {
  const GeometryMap g = block(16, 32, 4, 11, 10, 15);
  const double a = 0.8;
  GridField f(16, 32, 3);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 32; ++j) f(i, j, 2) = a * normalized_coord(j, 32);
  const auto F = surface_forces(f, extract_surfaces(g), PhysicsConfig{});
  EXPECT_NEAR(F[kFront], a * normalized_coord(9, 32) * 7 / 16.0, 1e-12);
  EXPECT_NEAR(F[kBack], a * normalized_coord(15, 32) * 7 / 16.0, 1e-12);
}

TEST(SurfaceForces, LinearInPressure) {
  Rng rng(2);
  const GeometryMap g = block(8, 16, 2, 6, 4, 9);
  const SurfaceMask m = extract_surfaces(g);
  const GridField f1(random_array({8, 16, 3}, rng)), f2(random_array({8, 16, 3}, rng));
  GridField mix(8, 16, 3);
  for (std::size_t k = 0; k < mix.values().size(); ++k)
    mix.values()[k] = 2.0 * f1.values()[k] - 0.5 * f2.values()[k];
  const auto a = surface_forces(f1, m, PhysicsConfig{}), b = surface_forces(f2, m, PhysicsConfig{}),
             c = surface_forces(mix, m, PhysicsConfig{});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(c[k], 2.0 * a[k] - 0.5 * b[k], 1e-12);
}

// Continuity -----------------------------------------------------------------------

TEST(Continuity, UniformFlowHasNoResidual) {
  const GeometryMap g(8, 16);
  const GridField f = uniform_field(8, 16, 1.25, 0, 0);
  for (double q : continuity_profile(f, g, PhysicsConfig{})) EXPECT_EQ(q, 0.0);
  GeometryMap blocked = g;
  for (std::size_t i = 0; i < 8; ++i) blocked(i, 4) = 1.0;
  EXPECT_THROW(continuity_residual(f, blocked, PhysicsConfig{}, 4), ConfigError);
}

// Moments ---------------------------------------------------------------------------

TEST(Moments, RectangleCentroidAndExtents) {
  const std::size_t H = 16, W = 64;
  const GeometryMap g = block(H, W, 4, 8, 10, 20);
  const double pitch_x = 2.0 / (W - 1), pitch_y = 2.0 / (H - 1);
  const double n = static_cast<double>(H * W);
  for (double beta : {50.0, 1e3, 1e5}) {
    const GeometryMoments m = geometry_moments(Node::constant(g.values()), beta);
    EXPECT_NEAR(m.com_x.value()[0], 2.0 * 14.5 / (W - 1) - 1.0, 1e-12);
    EXPECT_NEAR(m.com_y.value()[0], 2.0 * 5.5 / (H - 1) - 1.0, 1e-12);
    // Smooth extrema overestimate by at most log(n)/beta on each side.
    const double L = m.length.value()[0], Hh = m.height.value()[0];
    EXPECT_GE(L, 10 * pitch_x - 1e-12);
    EXPECT_LE(L, 10 * pitch_x + 2.0 * std::log(n) / beta);
    EXPECT_GE(Hh, 4 * pitch_y - 1e-12);
    EXPECT_LE(Hh, 4 * pitch_y + 2.0 * std::log(n) / beta);
  }
  const GeometryMoments sharp = geometry_moments(Node::constant(g.values()), 1e5);
  EXPECT_NEAR(sharp.length.value()[0], 10 * pitch_x, 1e-3);
}

TEST(Moments, SymmetryAndScaleInvariance) {
  const std::size_t W = 33;
  GeometryMap g = block(9, W, 2, 7, 12, 21);  // columns 12..20 centered on 16
  g(1, 16) = 1.0;
  const GeometryMoments m = geometry_moments(Node::constant(g.values()));
  EXPECT_NEAR(m.com_x.value()[0], 0.0, 1e-15);
  Array half = g.values();
  for (double& v : half.data()) v *= 0.5;
  const GeometryMoments h = geometry_moments(Node::constant(half));
  EXPECT_NEAR(h.com_x.value()[0], m.com_x.value()[0], 1e-15);
  EXPECT_NEAR(h.com_y.value()[0], m.com_y.value()[0], 1e-15);
  EXPECT_THROW(geometry_moments(Node::constant(Array({4, 4, 1}))), ConfigError);
}

// total_loss -------------------------------------------------------------------

TEST(TotalLoss, Examples) {
  const GeometryMap g = block(8, 16, 2, 6, 5, 9);
  GridField f = uniform_field(8, 16, 1, 0, 1);
  set_column(f, 15, 2, 0, 1);
  zero_solid(f, g);
  const Node field = Node::constant(f.values()), geom = Node::constant(g.values());
  const PhysicalQuantities q = compute_quantities(f, g, PhysicsConfig{});

  PhysicalTargets t = targets_from_reference(f, g, PhysicsConfig{}, LossMode::ConstraintsGeometry);
  EXPECT_EQ(total_loss(field, geom, t, PhysicsConfig{}).total_value(), 0.0);

  PhysicalTargets only_dp;
  only_dp.delta_p = q.delta_p - 0.3;
  only_dp.weight_force = 0.0;
  EXPECT_NEAR(total_loss(field, geom, only_dp, PhysicsConfig{}).total_value(), 0.09, 1e-12);

  PhysicalTargets both = targets_from_reference(f, g, PhysicsConfig{}, LossMode::Constraints);
  both.delta_p = q.delta_p - 1.5;
  both.forces[kTop] = q.forces[kTop] + 2.0;
  const LossBreakdown b = total_loss(field, geom, both, PhysicsConfig{});
  EXPECT_NEAR(b.total_value(), 6.25, 1e-12);
  ASSERT_EQ(b.terms.size(), 5u);
  EXPECT_EQ(b.terms[0].name, "delta_p");
  EXPECT_EQ(b.terms[3].name, "f_top");
}

TEST(TotalLoss, FieldSseMode) {
  Rng rng(3);
  const GeometryMap g = block(8, 16, 2, 6, 5, 9);
  const Array a = random_array({8, 16, 3}, rng);
  PhysicalTargets t;
  t.mode = LossMode::FieldSse;
  t.field = a;
  Array b = a;
  b[7] += 2.0;
  const LossBreakdown lb = total_loss(Node::constant(b), Node::constant(g.values()), t, PhysicsConfig{});
  EXPECT_NEAR(lb.total_value(), 4.0, 1e-12);
  ASSERT_EQ(lb.terms.size(), 1u);
  EXPECT_EQ(lb.terms[0].name, "field");
}

TEST(TotalLoss, MissingTargetRejected) {
  const GeometryMap g = block(8, 16, 2, 6, 5, 9);
  const Node f = Node::constant(Array({8, 16, 3}));
  PhysicalTargets t;
  t.delta_p = 0.0;  // forces enabled but missing
  EXPECT_THROW(total_loss(f, Node::constant(g.values()), t, PhysicsConfig{}), ConfigError);
  PhysicalTargets s;
  s.mode = LossMode::FieldSse;
  EXPECT_THROW(total_loss(f, Node::constant(g.values()), s, PhysicsConfig{}), ConfigError);
  PhysicalTargets z;
  z.weight_dp = z.weight_force = 0.0;
  EXPECT_THROW(total_loss(f, Node::constant(g.values()), z, PhysicsConfig{}), ConfigError);
}

// Gradients -----------------------------------------------------------------------

namespace {

GeometryMap random_binary(Rng& rng, std::size_t H, std::size_t W) {
  const std::size_t r0 = 1 + uniform_index(rng, H / 2), c0 = 2 + uniform_index(rng, W / 2);
  return block(H, W, r0, r0 + 2 + uniform_index(rng, H / 3), c0, c0 + 2 + uniform_index(rng, W / 3));
}

}  // namespace

TEST(PhysicsGradients, PressureDifferenceAndForces) {
  Rng rng(4);
  for (int c = 0; c < 20; ++c) {
    const GeometryMap g = random_binary(rng, 8, 16);
    const SurfaceMask m = extract_surfaces(g);
    PhysicsConfig cfg;
    cfg.standard_dynamic_pressure = c % 2 == 1;
    const Array f = random_array({8, 16, 3}, rng);
    const auto dp = check_gradients(
        {f}, [&](const std::vector<Node>& v) { return total_pressure_difference(v[0], g, cfg); }, rng,
        1e-5, 64);
    EXPECT_LT(dp.relative_error, 1e-6);
    const double w[4] = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto fr = check_gradients({f}, [&](const std::vector<Node>& v) {
      const auto F = surface_forces(v[0], m, cfg);
      Node s = ops::scale(F[0], w[0]);
      for (int k = 1; k < 4; ++k) s = ops::add(s, ops::scale(F[k], w[k]));
      return s;
    }, rng, 1e-5, 200);
    EXPECT_LT(fr.relative_error, 1e-6);
  }
}

TEST(PhysicsGradients, Moments) {
  Rng rng(5);
  for (int c = 0; c < 20; ++c) {
    const Array g = random_array({6, 12, 1}, rng, 0.05, 1.0);
    const double w[4] = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto r = check_gradients({g}, [&](const std::vector<Node>& v) {
      const GeometryMoments m = geometry_moments(v[0], 5.0);
      return ops::add(ops::add(ops::scale(m.length, w[0]), ops::scale(m.height, w[1])),
                      ops::add(ops::scale(m.com_x, w[2]), ops::scale(m.com_y, w[3])));
    }, rng, 1e-5, 72);
    EXPECT_LT(r.relative_error, 1e-6);
  }
}

TEST(PhysicsGradients, TotalLoss) {
  Rng rng(6);
  for (int c = 0; c < 20; ++c) {
    const GeometryMap base = random_binary(rng, 8, 16);
    // Pull values off {0,1} while keeping the mask; distance from 0.5 is large.
    Array gv = base.values();
    for (double& v : gv.data()) v = v > 0.5 ? uniform(rng, 0.7, 1.0) : uniform(rng, 0.02, 0.3);
    const Array f = random_array({8, 16, 3}, rng);
    PhysicalTargets t = targets_from_reference(GridField(random_array({8, 16, 3}, rng)), base,
                                               PhysicsConfig{}, LossMode::ConstraintsGeometry);
    t.weight_length = 3.0;
    t.weight_com = 0.5;
    PhysicsConfig cfg;
    cfg.beta = 10.0;
    const auto r = check_gradients({f, gv}, [&](const std::vector<Node>& v) {
      return total_loss(v[0], v[1], t, cfg).total;
    }, rng, 1e-5, 96);
    EXPECT_LT(r.relative_error, 1e-6) << "configuration " << c;
  }
}

// Targets file ----------------------------------------------------------------------

TEST(TargetsFile, ParsesKeys) {
  const TargetsFile tf = [] {
    std::istringstream in(
        "# comment\nmode = constraints+geometry\ndelta_p=0.5\nf_front=1e-2\nf_back=-2\n"
        "f_top=0\nf_bottom=0.25\nlength=0.3\nheight=0.1\ncom_x=0\ncom_y=-0.1\nweight_dp=2\n"
        "weight_f=3\nweight_length=30\nweight_height=30\nweight_com=30\nreference_geometry=t.pgm\n"
        "reference_source=oracle\n");
    return parse_targets(in);
  }();
  const PhysicalTargets& t = tf.targets;
  EXPECT_EQ(t.mode, LossMode::ConstraintsGeometry);
  EXPECT_EQ(*t.delta_p, 0.5);
  EXPECT_EQ(*t.forces[kFront], 0.01);
  EXPECT_EQ(*t.forces[kBack], -2.0);
  EXPECT_EQ(*t.com_y, -0.1);
  EXPECT_EQ(t.weight_force, 3.0);
  EXPECT_EQ(t.weight_com, 30.0);
  EXPECT_EQ(*tf.reference_geometry, "t.pgm");
  EXPECT_EQ(tf.reference_source, "oracle");
}

TEST(TargetsFile, StrictErrors) {
  EXPECT_THROW(parse("delta_p=1\ndelta_p=2\n"), FormatError);
  EXPECT_THROW(parse("pressure=1\n"), FormatError);
  EXPECT_THROW(parse("delta_p=abc\n"), FormatError);
  EXPECT_THROW(parse("delta_p=1.0x\n"), FormatError);
  EXPECT_THROW(parse("delta_p=inf\n"), FormatError);
  EXPECT_THROW(parse("mode=everything\n"), FormatError);
  EXPECT_THROW(parse("weight_dp=-1\n"), FormatError);
  EXPECT_THROW(parse("delta_p\n"), FormatError);
  EXPECT_THROW(parse("delta_p=\n"), FormatError);
  EXPECT_THROW(parse("reference_source=cfd\n"), FormatError);
  EXPECT_NO_THROW(parse("\n   \n# only comments\n"));
}

TEST(TargetsFile, MergeKeepsExplicitValues) {
  PhysicalTargets ref;
  ref.delta_p = 1.0;
  ref.forces = {2.0, 3.0, 4.0, 5.0};
  ref.com_x = 0.1;
  PhysicalTargets ex = parse("delta_p=9\n");
  const PhysicalTargets m = merge_targets(ex, ref);
  EXPECT_EQ(*m.delta_p, 9.0);
  EXPECT_EQ(*m.forces[kBottom], 5.0);
  EXPECT_EQ(*m.com_x, 0.1);
  EXPECT_FALSE(m.length.has_value());
}
