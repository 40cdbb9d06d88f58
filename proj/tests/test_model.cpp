#include "nebp/tracker.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

namespace nebp {
namespace {

bool has_error(const std::vector<std::string>& errors, const std::string& what) {
  return std::find(errors.begin(), errors.end(), what) != errors.end();
}

TEST(ModelParams, Defaults) {
  const ModelParams p = default_params();
  EXPECT_EQ(p.t_dec, 0.5);
  EXPECT_EQ(p.t_pru, 1e-3);
  EXPECT_EQ(p.dt, 0.5);
  EXPECT_EQ(p.roi.x_min, -54.0);
  EXPECT_EQ(p.roi.x_max, 54.0);
  EXPECT_EQ(p.roi.y_min, -54.0);
  EXPECT_EQ(p.roi.y_max, 54.0);
  EXPECT_TRUE(validate(p).empty());
}

TEST(ModelParams, ValidationMessages) {
  ModelParams p;
  p.p_d = 0.0;
  EXPECT_TRUE(has_error(validate(p), "p_d out of range"));
  p = ModelParams{};
  p.t_pru = 0.9;
  p.t_dec = 0.5;
  EXPECT_TRUE(has_error(validate(p), "t_pru < t_dec violated"));
  p = ModelParams{};
  p.roi.x_max = p.roi.x_min;
  EXPECT_TRUE(has_error(validate(p), "roi degenerate"));
  p = ModelParams{};
  p.meas_cov(0, 0) = -1.0;
  EXPECT_FALSE(validate(p).empty());
  EXPECT_THROW(require_valid(p), ValidationError);
}

TEST(Predict, ConstantVelocity) {
  ModelParams p;
  p.dt = 1.0;
  p.q = 0.0;
  TrackerState s;
  PotentialObject po;
  po.state.mean << 1, 2, 3, 4;
  po.existence = 1.0;
  s.legacy.push_back(po);
  const TrackerState out = predict(s, p);
  EXPECT_TRUE(out.legacy[0].state.mean.isApprox(Vec4(4, 6, 3, 4)));
}

TEST(Predict, SurvivalThinsExistence) {
  ModelParams p;
  p.p_s = 0.9;
  TrackerState s;
  PotentialObject po;
  po.existence = 1.0;
  s.legacy.push_back(po);
  EXPECT_DOUBLE_EQ(predict(s, p).legacy[0].existence, 0.9);
}

TEST(Predict, ZeroPeriodIsIdentity) {
  EXPECT_EQ(cv_transition(0.0), Mat4::Identity());
  EXPECT_EQ(cv_process_noise(0.0, 0.0), Mat4::Zero());
}

TEST(Predict, NonFiniteThrows) {
  TrackerState s;
  PotentialObject po;
  po.state.mean(0) = std::numeric_limits<double>::infinity();
  s.legacy.push_back(po);
  EXPECT_THROW(predict(s, ModelParams{}), NumericalError);
}

TEST(AssociationWeights, NoDetectionProbability) {
  ModelParams p;
  p.p_d = 0.0;
  PotentialObject po;
  po.existence = 1.0;
  Detection d;
  const MatrixXd w = association_weights({po}, {d}, p);
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(0, 1), 0.0);
}

TEST(AssociationWeights, NonexistentObject) {
  PotentialObject po;
  po.existence = 0.0;
  Detection d;
  const MatrixXd w = association_weights({po}, {d}, ModelParams{});
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(0, 1), 0.0);
}

TEST(AssociationWeights, HandEvaluatedGaussian) {
  // mu_fa * f_fa = 1 / (25 * 4) = 0.01.
  ModelParams p;
  p.roi = Roi{-2.5, 2.5, -2.5, 2.5};
  p.v_max = 1.0;
  p.mu_fa = 1.0;
  p.p_d = 0.9;
  p.meas_cov = Mat4::Identity();
  PotentialObject po;
  po.existence = 1.0;
  po.state.covariance = Mat4::Identity();
  Detection d;
  const MatrixXd w = association_weights({po}, {d}, p);
  // S = P + R = 2 I, N(0; 0, 2 I_4) = 1 / ((2 pi)^2 * 4).
  const double density = 1.0 / (16.0 * std::numbers::pi * std::numbers::pi);
  const double w1 = 0.9 * density / 0.01;
  const double w0 = 0.1;
  EXPECT_NEAR(w(0, 0), w0 / (w0 + w1), 1e-12);
  EXPECT_NEAR(w(0, 1), w1 / (w0 + w1), 1e-12);
}

TEST(AssociationWeights, RowsNormalized) {
  testing::Rng rng(7);
  const ModelParams p;
  for (int t = 0; t < 50; ++t) {
    const auto f = testing::random_frame(rng, p, 1 + t % 6, t % 7);
    const MatrixXd w = association_weights(f.state.legacy, f.detections, p);
    for (Index i = 0; i < w.rows(); ++i) {
      EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(w.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(PhiBZero, UniformPriorRatio) {
  ModelParams p;
  Detection d;
  p.mu_n = 0.1;
  p.mu_fa = 1.0;
  EXPECT_DOUBLE_EQ(phi_b_zero(d, p), 1.1);
  p.mu_n = p.mu_fa = 3.0;
  EXPECT_DOUBLE_EQ(phi_b_zero(d, p), 2.0);
  p.mu_n = 2.0;
  p.mu_fa = 0.5;
  EXPECT_DOUBLE_EQ(phi_b_zero(d, p), 5.0);
}

TEST(PhiBZero, OutsideRoi) {
  Detection d;
  d.z(0) = 100.0;
  try {
    phi_b_zero(d, ModelParams{});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "out of ROI");
  }
}

TEST(LegacyUpdate, NoMeasurementsIsMissedDetectionBayes) {
  ModelParams p;
  PotentialObject po;
  po.existence = 0.7;
  po.state.mean << 1, 2, 3, 4;
  const MatrixXd phi_a = MatrixXd::Ones(1, 1);
  const MatrixXd kappa = MatrixXd::Ones(1, 1);
  const auto out = update_legacy_beliefs({po}, {}, phi_a, kappa, p);
  const double r = 0.7;
  EXPECT_NEAR(out[0].existence, r * (1 - p.p_d) / (1 - r * p.p_d), 1e-14);
  EXPECT_EQ(out[0].state.mean, po.state.mean);
  EXPECT_EQ(out[0].state.covariance, po.state.covariance);
}

TEST(LegacyUpdate, ZeroKappaMatchesNoMeasurements) {
  ModelParams p;
  PotentialObject po;
  po.existence = 0.6;
  Detection d;
  d.z << 0.3, 0.1, 0, 0;
  const MatrixXd phi_a = association_weights({po}, {d}, p);
  MatrixXd kappa = MatrixXd::Ones(1, 2);
  kappa(0, 1) = 0.0;
  const auto with = update_legacy_beliefs({po}, {d}, phi_a, kappa, p);
  const auto without = update_legacy_beliefs({po}, {}, MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), p);
  EXPECT_NEAR(with[0].existence, without[0].existence, 1e-14);
  EXPECT_EQ(with[0].state.mean, without[0].state.mean);
}

TEST(NewPo, ExistenceEnumeration) {
  ModelParams p;
  std::vector<Detection> d(1);
  VectorXd b0(1);
  MatrixXd iota = MatrixXd::Ones(1, 1);
  b0 << 1.0;
  EXPECT_EQ(init_new_po_beliefs(d, b0, iota, p)[0].existence, 0.0);
  b0 << 2.0;
  EXPECT_DOUBLE_EQ(init_new_po_beliefs(d, b0, iota, p)[0].existence, 0.5);
  iota = MatrixXd::Ones(1, 3);  // two legacy POs, mu = 1 each
  EXPECT_DOUBLE_EQ(init_new_po_beliefs(d, b0, iota, p)[0].existence, 0.25);
}

TEST(NewPo, StateFromMeasurement) {
  ModelParams p;
  Detection d;
  d.z << 1, 2, 3, 4;
  VectorXd b0 = VectorXd::Constant(1, 3.0);
  const auto po = init_new_po_beliefs({d}, b0, MatrixXd::Ones(1, 1), p)[0];
  EXPECT_EQ(po.state.mean, d.z);
  EXPECT_EQ(po.state.covariance, p.meas_cov);
  EXPECT_EQ(po.lineage, Lineage::New);
  EXPECT_FALSE(po.track_id.has_value());
}

TEST(Prune, Thresholds) {
  ModelParams p;
  auto make = [](double r) {
    PotentialObject po;
    po.existence = r;
    return po;
  };
  std::int64_t next = 10;
  const auto res = prune_and_declare({make(0.4), make(5e-4), make(0.5)}, {make(0.9)}, next, p);
  ASSERT_EQ(res.kept.size(), 3u);
  ASSERT_EQ(res.declared.size(), 2u);
  EXPECT_EQ(res.kept[res.declared[0]].existence, 0.5);
  EXPECT_EQ(res.kept[res.declared[0]].track_id, 10);
  EXPECT_EQ(res.kept[res.declared[1]].track_id, 11);
  EXPECT_FALSE(res.kept[0].track_id.has_value());
  EXPECT_EQ(next, 12);
  EXPECT_EQ(res.sources[2].lineage, Lineage::New);
}

TEST(Scores, Definition) {
  std::vector<Detection> d(1);
  std::vector<PotentialObject> fresh(1);
  fresh[0].existence = 0.8;
  std::vector<PotentialObject> legacy(2);
  legacy[0].existence = 0.9;
  legacy[1].existence = 0.3;
  MatrixXd phi_a(2, 2);
  phi_a << 0.5, 0.5, 1.0, 0.0;
  MatrixXd kappa = MatrixXd::Ones(2, 2);
  d[0].score = 0.7;
  object_scores(legacy, phi_a, kappa, fresh, d);
  EXPECT_DOUBLE_EQ(legacy[0].score, 1.6);
  EXPECT_DOUBLE_EQ(legacy[1].score, 0.3);
  EXPECT_DOUBLE_EQ(fresh[0].score, 0.8 + 0.7);
}

TEST(TrackStep, Empty) {
  const StepResult r = bp_track_step(TrackerState{}, {}, ModelParams{});
  EXPECT_TRUE(r.state.legacy.empty());
  EXPECT_TRUE(r.declared.empty());
  EXPECT_EQ(r.state.frame, 1);
}

TEST(TrackStep, RepeatedDetectionRaisesExistence) {
  ModelParams p;
  Detection d;
  d.z << 5, 5, 0, 0;
  const StepResult a = bp_track_step(TrackerState{}, {d}, p);
  ASSERT_EQ(a.new_beliefs.size(), 1u);
  const double first = a.new_beliefs[0].existence;
  const StepResult b = bp_track_step(a.state, {d}, p);
  ASSERT_EQ(b.legacy_beliefs.size(), 1u);
  EXPECT_GT(b.legacy_beliefs[0].existence, first);
}

TEST(TrackStep, HandOverCarriesIdentity) {
  ModelParams p;
  p.t_dec = p.t_dec_new = 0.9;
  Detection d;
  const StepResult a = bp_track_step(TrackerState{}, {d}, p);
  ASSERT_EQ(a.state.legacy.size(), 1u);
  EXPECT_TRUE(a.state.legacy[0].track_id.has_value());
  EXPECT_EQ(a.state.legacy[0].lineage, Lineage::Legacy);
}

}  // namespace
}  // namespace nebp
