#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "haft/errors.hpp"
#include "haft/evaluator.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Iou, Examples) {
  const BoundingBox b{3, 4, 5, 6};
  EXPECT_EQ(iou(b, b), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 1, 2, 2}), 1.0 / 7.0);
  EXPECT_EQ(iou({0, 0, 2, 2}, {5, 5, 2, 2}), 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox a{uniform(rng, 0, 20), uniform(rng, 0, 20), uniform(rng, 1, 15), uniform(rng, 1, 15)};
    const BoundingBox b{uniform(rng, 0, 20), uniform(rng, 0, 20), uniform(rng, 1, 15), uniform(rng, 1, 15)};
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(SuccessCurve, EdgeCases) {
  const SuccessCurve all_one = success_curve(std::vector<double>(7, 1.0));
  EXPECT_EQ(all_one.auc, 1.0);
  const SuccessCurve all_zero = success_curve(std::vector<double>(7, 0.0));
  EXPECT_EQ(all_zero.curve[0], 1.0);
  for (std::size_t k = 1; k < all_zero.curve.size(); ++k) EXPECT_EQ(all_zero.curve[k], 0.0);
  EXPECT_DOUBLE_EQ(all_zero.auc, 1.0 / 21.0);
  EXPECT_THROW(success_curve({}), DataError);
}

TEST(SuccessCurve, MatchesBruteForceDoubleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ious;
    const int n = 1 + static_cast<int>(uniform(rng, 0, 200));
    for (int i = 0; i < n; ++i) {
      // Include exact threshold values to exercise the >= boundary.
      ious.push_back(uniform(rng, 0, 1) < 0.2 ? std::round(uniform(rng, 0, 20)) * 0.05 : uniform(rng, 0, 1));
    }
    const SuccessCurve c = success_curve(ious);
    double auc = 0.0;
    for (int k = 0; k <= 20; ++k) {
      const double threshold = k * 0.05;
      int hits = 0;
      for (int i = 0; i < n; ++i)
        if (ious[i] >= threshold) ++hits;
      const double frac = static_cast<double>(hits) / n;
      EXPECT_EQ(c.curve[k], frac);
      auc += frac;
    }
    EXPECT_NEAR(c.auc, auc / 21.0, 1e-12);
    for (int k = 1; k <= 20; ++k) EXPECT_LE(c.curve[k], c.curve[k - 1]);
  }
}

TEST(Precision, Examples) {
  EXPECT_EQ(precision_at(std::vector<double>(5, 0.0)), 1.0);
  EXPECT_EQ(precision_at(std::vector<double>(5, 100.0)), 0.0);
  EXPECT_EQ(precision_at({20.0}), 1.0);
  EXPECT_EQ(precision_at({19.0, 21.0}), 0.5);
}

TEST(Failures, CountsDropsBelowTenPercent) {
  EXPECT_EQ(failure_count({0.8, 0.05, 0.02, 0.5, 0.09, 0.7}), 2);
  EXPECT_EQ(failure_count({0.0, 0.0}), 1);
  EXPECT_EQ(failure_count({0.5, 0.6}), 0);
}

TEST(OcclusionReport, SegmentsFromVisibility) {
  std::vector<double> vis(60, 1.0), ious(60, 0.75);
  EXPECT_TRUE(occlusion_report(vis, ious).segments.empty());
  for (int t = 40; t <= 50; ++t) vis[t] = 0.0;
  vis[39] = 0.6;
  const OcclusionReport r = occlusion_report(vis, ious);
  ASSERT_EQ(r.segments.size(), 1u);
  EXPECT_EQ(r.segments[0].start, 40);
  EXPECT_EQ(r.segments[0].end, 50);
  EXPECT_EQ(r.segments[0].recovery_frames, 5);
  EXPECT_DOUBLE_EQ(r.combined_iou, 0.75);
}

TEST(OcclusionReport, PerfectTrackerRecoversFully) {
  std::vector<double> vis(30, 1.0), ious(30, 1.0);
  for (int t = 10; t < 15; ++t) vis[t] = 0.2;
  for (int t = 27; t < 30; ++t) vis[t] = 0.0;
  const OcclusionReport r = occlusion_report(vis, ious);
  ASSERT_EQ(r.segments.size(), 2u);
  EXPECT_EQ(r.segments[0].recovery_iou, 1.0);
  EXPECT_EQ(r.segments[1].recovery_frames, 0);
  EXPECT_TRUE(std::isnan(r.segments[1].recovery_iou));
  EXPECT_EQ(r.recovery_iou, 1.0);
  EXPECT_EQ(r.failures, 0);
  EXPECT_THROW(occlusion_report(vis, std::vector<double>(29, 1.0)), DataError);
}

TEST(EvaluateSequence, ExcludesInitFrame) {
  const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<BoundingBox> pred{{50, 50, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}};
  const EvalResult r = evaluate_sequence("s", gt, pred, std::nullopt);
  EXPECT_EQ(r.success.auc, 1.0);
  EXPECT_EQ(r.precision20, 1.0);
  EXPECT_EQ(r.ious.size(), 3u);
  EXPECT_THROW(evaluate_sequence("s", gt, {gt[0]}, std::nullopt), DataError);
}

EvalResult fake_result(const std::string& name, double offset) {
  std::vector<BoundingBox> gt, pred;
  std::vector<double> vis;
  for (int t = 0; t < 20; ++t) {
    gt.push_back({10.0 + t, 20.0, 12, 12});
    pred.push_back({10.0 + t + offset * (t % 3), 20.0, 12, 12});
    vis.push_back(t >= 8 && t <= 11 ? 0.0 : 1.0);
  }
  return evaluate_sequence(name, gt, pred, vis);
}

TEST(EmitReport, WritesDeterministicFiles) {
  const std::vector<EvalResult> results{fake_result("alpha", 1.0), fake_result("beta", 3.0), fake_result("gamma", 6.0)};
  const fs::path a = fs::temp_directory_path() / "haft_report_a";
  const fs::path b = fs::temp_directory_path() / "haft_report_b";
  fs::remove_all(a);
  fs::remove_all(b);
  emit_report(results, a, {{0.0, 0.5}, {0.2, 0.6}});
  emit_report(results, b, {{0.0, 0.5}, {0.2, 0.6}});
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(a / "sequences")) csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 3);
  for (const char* f : {"summary.csv", "sequences/alpha.csv", "sequences/gamma.csv", "lambda_sweep.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  for (const char* f : {"success.png", "precision.png", "lambda_sweep.png"}) EXPECT_TRUE(fs::exists(a / f)) << f;
  std::istringstream summary(slurp(a / "summary.csv"));
  std::string header;
  std::getline(summary, header);
  EXPECT_EQ(header, "sequence,auc,precision20,failures,occl_mean_iou,recovery_iou");
  EXPECT_THROW(emit_report({}, a), DataError);
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.backbone.channels = {4, 8, 8, 8};
  mc.disc_width = 8;
  mc.crop.patch_size = 48;
  mc.crop.context_factor = 4.0;
  return mc;
}

SynthConfig scenes() {
  SynthConfig sc;
  sc.length = 8;
  sc.width = 96;
  sc.height = 96;
  sc.target_min_size = 14;
  sc.target_max_size = 18;
  return sc;
}

TEST(LambdaSweep, SingleRowAndBaselineIdentity) {
  const HaftModel model(small_model(), 1);
  const SyntheticSource source(scenes(), 3, 2);
  const std::vector<LambdaRow> one = run_lambda_sweep(model, source, {0.0}, {});
  ASSERT_EQ(one.size(), 1u);
  TrackConfig baseline;
  baseline.use_predictor = false;
  EXPECT_EQ(one[0].mean_auc, mean_auc(evaluate_tracker(model, source, baseline)));
}

TEST(EvaluateTracker, ParallelMatchesSerial) {
  const HaftModel model(small_model(), 1);
  const SyntheticSource source(scenes(), 3, 3);
  const auto serial = evaluate_tracker(model, source, {}, 1);
  const auto parallel = evaluate_tracker(model, source, {}, 3);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].sequence, parallel[i].sequence);
    EXPECT_EQ(serial[i].ious, parallel[i].ious);
  }
}

}  // namespace
}  // namespace haft
