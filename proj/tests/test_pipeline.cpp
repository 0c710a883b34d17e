#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "invshape/data/synthetic.hpp"
#include "invshape/pipeline/suite.hpp"
#include "support.hpp"

using namespace invshape;

namespace {

constexpr std::size_t kH = 16, kW = 32;

struct Fixture {
  UNet unet;
  Normalization norm;
  LocNet loc;
};

Fixture make_fixture(double identity_gain = 0.99) {
  UNetConfig uc;
  uc.base_channels = 4;
  uc.depth = 2;
  Fixture f{UNet(uc, 1), {}, {}};
  f.unet.freeze();
  f.norm.channels = {{0.0, 2.0}, {-0.1, 0.1}, {0.5, 2.5}};
  LocNetConfig lc;
  lc.height = kH;
  lc.width = kW;
  lc.conv_channels = {4, 8, 8};
  lc.identity_gain = identity_gain;
  lc.fc_weight_scale = 0.5;
  f.loc = LocNet(lc, 2);
  return f;
}

GeometryMap circle() { return rasterize(kH, kW, {ShapeSpec{ShapeKind::Circle, 15.5, 7.5, 4, 4}}); }
GeometryMap rect() { return rasterize(kH, kW, {ShapeSpec{ShapeKind::Rectangle, 15.5, 7.5, 6, 3}}); }

PhysicalTargets targets_for(const Fixture& f, const GeometryMap& target, LossMode mode) {
  return targets_from_reference(predict(f.unet, target, f.norm), target, PhysicsConfig{}, mode);
}

TransformConfig short_run(std::size_t iterations = 6) {
  TransformConfig c;
  c.learning_rate = 1e-3;
  c.iterations = iterations;
  c.snapshot_every = 2;
  return c;
}

}  // namespace

TEST(Compare, RelativeAndAbsolute) {
  const TargetComparison r = compare("delta_p", 1.1, 1.0);
  EXPECT_FALSE(r.absolute);
  EXPECT_NEAR(r.error, 0.1, 1e-12);
  const TargetComparison z = compare("com_x", 0.02, 0.0);
  EXPECT_TRUE(z.absolute);
  EXPECT_EQ(z.error, 0.02);
  EXPECT_TRUE(compare("com_x", 0.0, -1e-17).absolute);
}

TEST(RunTransformation, FreezeContract) {
  Fixture f = make_fixture();
  const std::uint64_t hash = checkpoint_hash(f.unet);
  const PhysicalTargets t = targets_for(f, rect(), LossMode::ConstraintsGeometry);
  const RunRecord rec = run_transformation(circle(), f.unet, f.norm, f.loc, t, short_run());
  EXPECT_EQ(rec.unet_fingerprint_before, rec.unet_fingerprint_after);
  EXPECT_EQ(checkpoint_hash(f.unet), hash);
  EXPECT_EQ(rec.updates, 6u);
  EXPECT_EQ(rec.history.size(), 6u);
  EXPECT_EQ(rec.snapshots.size(), 3u);
  EXPECT_TRUE(is_binary(rec.final_geometry));
}

TEST(RunTransformation, UnfrozenUNetRejected) {
  Fixture f = make_fixture();
  f.unet.params().set_trainable(true);
  const PhysicalTargets t = targets_for(f, rect(), LossMode::Constraints);
  EXPECT_THROW(run_transformation(circle(), f.unet, f.norm, f.loc, t, short_run()), ConfigError);
}

TEST(RunTransformation, InvalidInputsRejected) {
  Fixture f = make_fixture();
  const PhysicalTargets t = targets_for(f, rect(), LossMode::Constraints);
  GeometryMap soft = circle();
  soft(0, 0) = 0.3;
  EXPECT_THROW(run_transformation(soft, f.unet, f.norm, f.loc, t, short_run()), ConfigError);
  TransformConfig zero = short_run();
  zero.iterations = 0;
  EXPECT_THROW(run_transformation(circle(), f.unet, f.norm, f.loc, t, zero), ConfigError);
  EXPECT_THROW(run_transformation(circle(), f.unet, Normalization{}, f.loc, t, short_run()), ConfigError);
}

TEST(RunTransformation, Deterministic) {
  Fixture a = make_fixture(), b = make_fixture();
  const PhysicalTargets t = targets_for(a, rect(), LossMode::ConstraintsGeometry);
  const RunRecord ra = run_transformation(circle(), a.unet, a.norm, a.loc, t, short_run());
  const RunRecord rb = run_transformation(circle(), b.unet, b.norm, b.loc, t, short_run());
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t k = 0; k < ra.history.size(); ++k) {
    EXPECT_EQ(ra.history[k].total, rb.history[k].total);
    EXPECT_EQ(ra.history[k].terms, rb.history[k].terms);
  }
  EXPECT_TRUE(bitwise_equal(ra.final_warped.values(), rb.final_warped.values()));
  EXPECT_TRUE(bitwise_equal(ra.final_field.values(), rb.final_field.values()));
  EXPECT_EQ(a.loc.params().fingerprint(), b.loc.params().fingerprint());
}

TEST(RunTransformation, LossDecomposition) {
  Fixture f = make_fixture();
  PhysicalTargets t = targets_for(f, rect(), LossMode::ConstraintsGeometry);
  t.weight_length = 30.0;
  t.weight_com = 3.0;
  const RunRecord rec = run_transformation(circle(), f.unet, f.norm, f.loc, t, short_run());
  ASSERT_EQ(rec.term_names.size(), 9u);
  for (const IterationRecord& r : rec.history) {
    double s = 0.0;
    for (std::size_t k = 0; k < r.terms.size(); ++k) s += rec.term_weights[k] * r.terms[k];
    EXPECT_NEAR(r.total, s, 1e-12 * std::max(1.0, std::abs(r.total)));
  }
  EXPECT_EQ(rec.comparisons.size(), 9u);
}

TEST(RunTransformation, NonFiniteLossAborts) {
  Fixture f = make_fixture();
  PhysicalTargets t = targets_for(f, rect(), LossMode::Constraints);
  t.delta_p = NAN;
  try {
    run_transformation(circle(), f.unet, f.norm, f.loc, t, short_run());
    FAIL() << "expected abort";
  } catch (const RunAborted& e) {
    EXPECT_EQ(e.record.stop_reason, "non-finite loss");
    ASSERT_EQ(e.record.snapshots.size(), 1u);
    EXPECT_EQ(e.record.snapshots[0].first, 1u);
  }
}

TEST(RunTransformation, FieldSseAgainstOwnPrediction) {
  Fixture f = make_fixture(1.0 - 1e-12);
  f.loc = LocNet([] {
    LocNetConfig lc;
    lc.height = kH;
    lc.width = kW;
    lc.conv_channels = {4, 8, 8};
    lc.identity_gain = 1.0 - 1e-12;
    return lc;
  }(), 2);
  const GeometryMap g = circle();
  PhysicalTargets t = targets_for(f, g, LossMode::FieldSse);
  const RunRecord rec = run_transformation(g, f.unet, f.norm, f.loc, t, short_run(3));
  EXPECT_LT(rec.history.front().total, 1e-12);
  EXPECT_TRUE(bitwise_equal(rec.final_geometry.values(), g.values()));
}

TEST(RunTransformation, PlateauStops) {
  Fixture f = make_fixture();
  const PhysicalTargets t = targets_for(f, rect(), LossMode::Constraints);
  TransformConfig c = short_run(50);
  c.learning_rate = 0.0;
  c.plateau_window = 5;
  const RunRecord rec = run_transformation(circle(), f.unet, f.norm, f.loc, t, c);
  EXPECT_EQ(rec.stop_reason, "plateau");
  EXPECT_EQ(rec.history.size(), 6u);
}

// Suite -----------------------------------------------------------------------------

TEST(Suite, FifteenCells) {
  Fixture f = make_fixture();
  std::vector<ExperimentPair> pairs;
  for (int k = 0; k < 5; ++k) {
    const double shift = 2.0 * k;
    pairs.push_back({"pair" + std::to_string(k),
                     rasterize(kH, kW, {ShapeSpec{ShapeKind::Circle, 12.5 + shift, 7.5, 3.5, 3.5}}),
                     rasterize(kH, kW, {ShapeSpec{ShapeKind::Rectangle, 13.5 + shift, 7.5, 5, 2.5 + 0.5 * k}})});
  }
  SuiteConfig cfg;
  cfg.transform = short_run(3);
  const SuiteResult res =
      run_experiment_suite(pairs, {LossMode::Constraints, LossMode::ConstraintsGeometry, LossMode::FieldSse},
                           f.unet, f.norm, f.loc, cfg);
  ASSERT_EQ(res.cells.size(), 15u);
  for (const SuiteCell& c : res.cells) {
    EXPECT_TRUE(c.ok) << c.error;
    EXPECT_EQ(c.record.history.size(), 3u);
    EXPECT_FALSE(c.record.term_names.empty());
    EXPECT_TRUE(std::isfinite(c.metric));
  }
  // Each cell starts from the pretrained network, not from the previous cell.
  EXPECT_EQ(res.cells[0].record.history[0].total, res.cells[0].record.initial_loss);

  const auto dir = std::filesystem::temp_directory_path() / "invshape_test_suite";
  std::filesystem::remove_all(dir);
  write_suite(dir, res, pairs, f.unet, f.norm);
  EXPECT_TRUE(std::filesystem::exists(dir / "results.tsv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "panels_pair0.ppm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cell_pair4_constraints_geometry" / "metrics.tsv"));
  std::filesystem::remove_all(dir);
}

TEST(Suite, FailingCellDoesNotStopSuite) {
  Fixture f = make_fixture();
  std::vector<ExperimentPair> pairs{{"bad", circle(), GeometryMap(kH, kW)}, {"good", circle(), rect()}};
  SuiteConfig cfg;
  cfg.transform = short_run(2);
  const SuiteResult res = run_experiment_suite(pairs, {LossMode::Constraints}, f.unet, f.norm, f.loc, cfg);
  ASSERT_EQ(res.cells.size(), 2u);
  EXPECT_FALSE(res.cells[0].ok);
  EXPECT_FALSE(res.cells[0].error.empty());
  EXPECT_TRUE(res.cells[1].ok);
}

TEST(RunRecordOutput, DirectoryLayout) {
  Fixture f = make_fixture();
  const PhysicalTargets t = targets_for(f, rect(), LossMode::ConstraintsGeometry);
  const RunRecord rec = run_transformation(circle(), f.unet, f.norm, f.loc, t, short_run(4));
  const auto dir = std::filesystem::temp_directory_path() / "invshape_test_run";
  std::filesystem::remove_all(dir);
  write_run_record(dir, rec);
  for (const char* name : {"metrics.tsv", "summary.txt", "initial.pgm", "final_warped.pgm",
                           "final_geometry.pgm", "final_field.ppm"})
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  EXPECT_TRUE(std::filesystem::exists(dir / "snapshots" / "iter_000001.pgm"));
  const GeometryMap back = read_pgm(dir / "final_geometry.pgm");
  EXPECT_TRUE(bitwise_equal(back.values(), rec.final_geometry.values()));
  std::filesystem::remove_all(dir);
}

// Validation ------------------------------------------------------------------------

TEST(Validation, OracleEqualsSurrogate) {
  const GeometryMap g = rect();
  const GridField oracle = analytic_field(g);
  const PhysicalTargets t = targets_from_reference(oracle, g, PhysicsConfig{}, LossMode::Constraints);
  const ValidationReport r = validate_against_oracle(g, oracle, oracle, t, PhysicsConfig{});
  ASSERT_EQ(r.quantities.size(), 5u);
  EXPECT_EQ(r.quantities[0].name, "delta_p");
  for (const QuantityDelta& q : r.quantities) EXPECT_EQ(q.oracle, q.surrogate);
  for (double m : r.mre) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(r.dq_oracle.size(), kW);
  for (double q : r.dq_oracle) EXPECT_LT(std::abs(q), 1e-9);
}

TEST(Validation, DiscrepancyEqualsPredictionError) {
  Fixture f = make_fixture();
  const GeometryMap g = rect();
  const GridField oracle = analytic_field(g);
  const GridField pred = predict(f.unet, g, f.norm);
  const PhysicalTargets t = targets_from_reference(oracle, g, PhysicsConfig{}, LossMode::Constraints);
  const ValidationReport r = validate_against_oracle(g, oracle, pred, t, PhysicsConfig{});
  const PhysicalQuantities qp = compute_quantities(pred, g, PhysicsConfig{});
  const PhysicalQuantities qo = compute_quantities(oracle, g, PhysicsConfig{});
  EXPECT_EQ(r.quantities[0].surrogate - r.quantities[0].oracle, qp.delta_p - qo.delta_p);
  for (std::size_t k = 0; k < 4; ++k)
    EXPECT_EQ(r.quantities[1 + k].surrogate - r.quantities[1 + k].oracle, qp.forces[k] - qo.forces[k]);
  for (const TargetComparison& c : r.oracle_vs_target) EXPECT_LT(c.error, 1e-12);
  EXPECT_THROW(validate_against_oracle(g, GridField(kH, kW + 1, 3), pred, t, PhysicsConfig{}), ShapeError);
}
