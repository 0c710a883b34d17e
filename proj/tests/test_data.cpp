#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "invshape/data/container.hpp"
#include "invshape/data/scatter.hpp"
#include "invshape/data/synthetic.hpp"
#include "invshape/physics/physics.hpp"

using namespace invshape;

namespace {

// Regular mesh over [0, W] x [0, H] with nodes at integer coordinates, two
// triangles per cell, carrying f(x, y) in all three channels (scaled).
ScatterSet grid_mesh(std::size_t H, std::size_t W, double (*f)(double, double)) {
  ScatterSet s;
  for (std::size_t i = 0; i <= H; ++i)
    for (std::size_t j = 0; j <= W; ++j) {
      const double x = static_cast<double>(j), y = static_cast<double>(i);
      s.points.push_back({x, y, f(x, y), 2.0 * f(x, y), -f(x, y)});
    }
  auto id = [&](std::size_t i, std::size_t j) { return i * (W + 1) + j; };
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      s.triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
      s.triangles.push_back({id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)});
    }
  s.bounds = {0, static_cast<double>(W), 0, static_cast<double>(H)};
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("invshape_test_" + name);
}

}  // namespace

// interpolate_scatter ----------------------------------------------------------

TEST(InterpolateScatter, NodesAtPixelCentersPassThrough) {
  // Bounds chosen so the pixel centers coincide with the mesh nodes.
  ScatterSet s = grid_mesh(3, 4, [](double x, double y) { return std::sin(x) + y * y; });
  s.bounds = {-0.5, 4.5, -0.5, 3.5};
  const IngestedSample out = interpolate_scatter(s, 4, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double v = std::sin(static_cast<double>(j)) + static_cast<double>(i * i);
      EXPECT_NEAR(out.field(i, j, 0), v, 1e-12);
      EXPECT_NEAR(out.field(i, j, 2), -v, 1e-12);
      EXPECT_FALSE(out.geometry.solid(i, j));
    }
}

TEST(InterpolateScatter, TriangleCentroid) {
  ScatterSet s;
  s.points = {{0, 0, 0, 0, 0}, {3, 0, 3, 3, 3}, {0, 3, 6, 6, 6}};
  s.triangles = {{0, 1, 2}};
  s.bounds = {-0.5, 2.5, -0.5, 2.5};  // pixel centers at 0, 1, 2; (1, 1) is the centroid
  const IngestedSample out = interpolate_scatter(s, 3, 3);
  EXPECT_NEAR(out.field(1, 1, 0), 3.0, 1e-12);
  EXPECT_NEAR(out.field(1, 1, 2), 3.0, 1e-12);
  // Pixel (2, 2) at (2, 2) lies outside the triangle and becomes solid.
  EXPECT_TRUE(out.geometry.solid(2, 2));
  EXPECT_EQ(out.field(2, 2, 0), 0.0);
}

TEST(InterpolateScatter, ReproducesAffineFields) {
  const ScatterSet s = grid_mesh(6, 10, [](double x, double y) { return 0.3 * x - 1.7 * y + 2.0; });
  const IngestedSample out = interpolate_scatter(s, 8, 13);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 13; ++j) {
      const double x = (static_cast<double>(j) + 0.5) * 10.0 / 13.0;
      const double y = (static_cast<double>(i) + 0.5) * 6.0 / 8.0;
      const double v = 0.3 * x - 1.7 * y + 2.0;
      EXPECT_NEAR(out.field(i, j, 0), v, 1e-10);
      EXPECT_NEAR(out.field(i, j, 1), 2.0 * v, 1e-10);
    }
}

TEST(InterpolateScatter, UncoveredPixelWithMaskRejected) {
  ScatterSet s;
  s.points = {{0, 0, 1, 1, 1}, {3, 0, 1, 1, 1}, {0, 3, 1, 1, 1}};
  s.triangles = {{0, 1, 2}};
  s.bounds = {-0.5, 2.5, -0.5, 2.5};
  GeometryMap mask(3, 3);
  try {
    interpolate_scatter(s, 3, 3, mask);
    FAIL() << "expected rejection";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("pixel (2, 2)"), std::string::npos) << e.what();
  }
  mask(2, 2) = 1.0;
  mask(1, 2) = 1.0;
  mask(2, 1) = 1.0;
  EXPECT_NO_THROW(interpolate_scatter(s, 3, 3, mask));
}

TEST(ParseScatter, TextLayoutAndErrors) {
  std::istringstream ok("POINTS 3\n0 0 1 0 2\n1 0 1 0 2\n0 1 1 0 2\nTRIANGLES 1\n0 1 2\nBOUNDS 0 1 0 1\n");
  const ScatterSet s = parse_scatter(ok);
  EXPECT_EQ(s.points.size(), 3u);
  EXPECT_EQ(s.triangles.size(), 1u);
  std::istringstream bad_index("POINTS 3\n0 0 1 0 2\n1 0 1 0 2\n0 1 1 0 2\nTRIANGLES 1\n0 1 5\nBOUNDS 0 1 0 1\n");
  EXPECT_THROW(parse_scatter(bad_index), FormatError);
  std::istringstream degenerate("POINTS 3\n0 0 1 0 2\n1 1 1 0 2\n2 2 1 0 2\nTRIANGLES 1\n0 1 2\nBOUNDS 0 2 0 2\n");
  EXPECT_THROW(parse_scatter(degenerate), FormatError);
  std::istringstream truncated("POINTS 3\n0 0 1 0 2\n");
  EXPECT_THROW(parse_scatter(truncated), FormatError);
  std::istringstream unknown("FOO 1\n");
  EXPECT_THROW(parse_scatter(unknown), FormatError);
}

// binarize_geometry ------------------------------------------------------------

TEST(BinarizeGeometry, Threshold) {
  GeometryMap g(1, 3);
  g(0, 0) = 0.49;
  g(0, 1) = 0.5;
  g(0, 2) = 0.51;
  const GeometryMap b = binarize_geometry(g);
  EXPECT_EQ(b(0, 0), 0.0);
  EXPECT_EQ(b(0, 1), 1.0);
  EXPECT_EQ(b(0, 2), 1.0);
  EXPECT_TRUE(is_binary(b));
  EXPECT_FALSE(is_binary(g));
  const GeometryMap b2 = binarize_geometry(b);
  EXPECT_TRUE(bitwise_equal(b.values(), b2.values()));
}

// normalize ----------------------------------------------------------------------

TEST(Normalization, MidpointRoundTripAndDegenerate) {
  Dataset d;
  for (int k = 0; k < 2; ++k) {
    GridField f(1, 2, 2);
    f(0, 0, 0) = k == 0 ? 0.0 : 10.0;
    f(0, 1, 0) = 3.7;
    f(0, 0, 1) = 4.0;
    f(0, 1, 1) = 4.0;
    d.samples.push_back({GeometryMap(1, 2), f});
  }
  d.train = {0, 1};
  d = normalize(d);
  const Normalization& n = d.normalization;
  EXPECT_EQ(n.normalize(5.0, 0), 0.0);
  EXPECT_EQ(n.normalize(0.0, 0), -1.0);
  EXPECT_EQ(n.normalize(10.0, 0), 1.0);
  for (double v : {-3.0, 0.1, 3.7, 9.99, 12.5}) EXPECT_NEAR(n.denormalize(n.normalize(v, 0), 0), v, 1e-12);
  EXPECT_TRUE(n.channels[1].degenerate());
  EXPECT_FALSE(n.channels[0].degenerate());
  const Array z = n.normalize(d.samples[0].field.values());
  EXPECT_EQ(z.at(0, 0, 1), 0.0);
  EXPECT_EQ(z.at(0, 1, 1), 0.0);
  EXPECT_EQ(n.denormalize(0.0, 1), 4.0);
}

TEST(Normalization, NodeAndArrayDenormalizeAgree) {
  Normalization n;
  n.channels = {{-1.5, 2.25}, {0.0, 0.0}, {0.3, 7.0}};
  Array a({2, 2, 3});
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::sin(static_cast<double>(k));
  EXPECT_TRUE(bitwise_equal(n.denormalize(a), n.denormalize(Node::constant(a)).value()));
}

TEST(Normalization, EmptyTrainingSplitRejected) {
  Dataset d = generate_synthetic(1, 2, SyntheticConfig{});
  EXPECT_THROW(normalize(d), ConfigError);
}

// generate_synthetic -------------------------------------------------------

TEST(Synthetic, EmptyChannelHasIdenticalColumns) {
  const GeometryMap g(32, 64);
  const GridField f = analytic_field(g);
  for (std::size_t j = 1; j < 64; ++j)
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(f(i, j, GridField::kU), f(i, 0, GridField::kU));
  const PhysicsConfig cfg;
  for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(continuity_residual(f, g, cfg, j), 0.0);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(f(i, 10, GridField::kV), 0.0);
}

TEST(Synthetic, HalfGapDoublesPeakVelocity) {
  GeometryMap g(32, 16);
  for (std::size_t i = 0; i < 16; ++i) g(i, 8) = 1.0;  // column 8 keeps rows 16..31 open
  const GridField f = analytic_field(g);
  double open_peak = 0.0, half_peak = 0.0;
  for (std::size_t i = 0; i < 32; ++i) {
    open_peak = std::max(open_peak, f(i, 0, GridField::kU));
    half_peak = std::max(half_peak, f(i, 8, GridField::kU));
  }
  // Discrete parabolas carry slightly different sum/peak ratios; the
  // continuum ratio is exactly 2.
  EXPECT_NEAR(half_peak / open_peak, 2.0, 0.01);
}

TEST(Synthetic, MassConservingAndZeroInsideSolid) {
  const Dataset d = generate_synthetic(7, 20, SyntheticConfig{});
  const PhysicsConfig cfg;
  for (const Sample& s : d.samples) {
    for (double q : continuity_profile(s.field, s.geometry, cfg)) EXPECT_LT(std::abs(q), 1e-9);
    for (std::size_t i = 0; i < s.geometry.height(); ++i)
      for (std::size_t j = 0; j < s.geometry.width(); ++j)
        if (s.geometry.solid(i, j)) {
          for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s.field(i, j, c), 0.0);
        }
    EXPECT_TRUE(is_binary(s.geometry));
    EXPECT_GT(s.geometry.solid_count(), 0u);
  }
}

TEST(Synthetic, SeedDeterminism) {
  const Dataset a = generate_synthetic(3, 5, SyntheticConfig{});
  const Dataset b = generate_synthetic(3, 5, SyntheticConfig{});
  const Dataset c = generate_synthetic(4, 5, SyntheticConfig{});
  bool differs = false;
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_TRUE(bitwise_equal(a.samples[k].geometry.values(), b.samples[k].geometry.values()));
    EXPECT_TRUE(bitwise_equal(a.samples[k].field.values(), b.samples[k].field.values()));
    differs = differs || !bitwise_equal(a.samples[k].geometry.values(), c.samples[k].geometry.values());
  }
  EXPECT_TRUE(differs);
}

TEST(Synthetic, EachFamilyRasterizes) {
  for (ShapeKind k : {ShapeKind::Rectangle, ShapeKind::Triangle, ShapeKind::Circle, ShapeKind::Airfoil}) {
    SyntheticConfig cfg;
    cfg.families = {k};
    const Dataset d = generate_synthetic(11, 3, cfg);
    for (const Sample& s : d.samples) EXPECT_GT(s.geometry.solid_count(), 0u) << to_string(k);
  }
  EXPECT_THROW(parse_shape_kind("hexagon"), ConfigError);
  EXPECT_EQ(parse_shape_kind("airfoil"), ShapeKind::Airfoil);
}

TEST(Synthetic, RectangleRasterExtents) {
  // Centers strictly inside: columns 10..19, rows 4..7.
  const GeometryMap g = rasterize(12, 32, {ShapeSpec{ShapeKind::Rectangle, 14.5, 5.5, 5.0, 2.0}});
  EXPECT_EQ(g.solid_count(), 40u);
  EXPECT_TRUE(g.solid(4, 10));
  EXPECT_TRUE(g.solid(7, 19));
  EXPECT_FALSE(g.solid(3, 10));
  EXPECT_FALSE(g.solid(4, 20));
}

// split ------------------------------------------------------------------------

TEST(Split, Sizes) {
  Dataset d;
  d.samples.resize(1350, Sample{GeometryMap(1, 1), GridField(1, 1, 3)});
  const Dataset s = split(d, 1050.0 / 1350.0, 1);
  EXPECT_EQ(s.train.size(), 1050u);
  EXPECT_EQ(s.eval.size(), 300u);
  std::vector<bool> seen(1350, false);
  for (std::size_t i : s.train) seen[i] = true;
  for (std::size_t i : s.eval) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
  for (bool b : seen) EXPECT_TRUE(b);

  d.samples.resize(10);
  const Dataset t = split(d, 0.8, 5);
  EXPECT_EQ(t.train.size(), 8u);
  EXPECT_EQ(t.eval.size(), 2u);
  EXPECT_EQ(split(d, 0.8, 5).train, t.train);
}

TEST(Split, EmptySideRejected) {
  Dataset d;
  d.samples.resize(3, Sample{GeometryMap(1, 1), GridField(1, 1, 3)});
  EXPECT_THROW(split(d, 0.1, 0), ConfigError);
  EXPECT_THROW(split(d, 0.9, 0), ConfigError);
  EXPECT_THROW(split(d, 1.0, 0), ConfigError);
  EXPECT_THROW(split(d, 0.0, 0), ConfigError);
}

// container --------------------------------------------------------------------

TEST(Container, RoundTripBitwise) {
  Dataset d = quantize_to_f32(normalize(split(generate_synthetic(2, 6, SyntheticConfig{}), 0.5, 3)));
  const auto path = temp_path("roundtrip.ffd");
  write_container(path, d);
  const Dataset r = read_container(path);
  std::filesystem::remove(path);
  ASSERT_EQ(r.size(), d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    EXPECT_TRUE(bitwise_equal(r.samples[k].geometry.values(), d.samples[k].geometry.values()));
    EXPECT_TRUE(bitwise_equal(r.samples[k].field.values(), d.samples[k].field.values()));
  }
  EXPECT_EQ(r.train, d.train);
  EXPECT_EQ(r.eval, d.eval);
  ASSERT_EQ(r.normalization.channels.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(r.normalization.channels[c].min, d.normalization.channels[c].min);
    EXPECT_EQ(r.normalization.channels[c].max, d.normalization.channels[c].max);
  }
  // Re-encoding is byte-identical.
  EXPECT_EQ(encode_container(r), encode_container(d));
}

TEST(Container, MalformedInputsRejected) {
  const Dataset d = quantize_to_f32(generate_synthetic(2, 2, SyntheticConfig{}));
  const auto bytes = encode_container(d);
  auto bad_magic = bytes;
  bad_magic[3] = '9';
  EXPECT_THROW(decode_container(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  EXPECT_THROW(decode_container(truncated), FormatError);
  auto overcount = bytes;
  overcount[4] = 3;  // N = 3 with payload for 2
  EXPECT_THROW(decode_container(overcount), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_container(trailing), FormatError);
  EXPECT_THROW(read_container(temp_path("does_not_exist.ffd")), ConfigError);
}

TEST(Container, InconsistentSamplesRejected) {
  Dataset d = generate_synthetic(2, 2, SyntheticConfig{});
  d.samples[1].geometry = GeometryMap(16, 16);
  EXPECT_THROW(encode_container(d), ShapeError);
}
