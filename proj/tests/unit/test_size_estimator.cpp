#include <gtest/gtest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "haft/errors.hpp"
#include "haft/size_estimator.hpp"

namespace haft {
namespace {

FeatureMap random_map(int c, int h, int w, Rng& rng) {
  nn::Tensor t({1, c, h, w});
  for (double& v : t.values()) v = gaussian(rng, 1.0);
  return {nn::Var(std::move(t)), {8.0, 0.5}};
}

void zero_modulation(const IouHeadParams& head, double bias) {
  nn::Var w = head.modulation().weight, b = head.modulation().bias, sb = head.score().bias;
  nn::Var hb = head.hidden().bias;
  w.mutable_value().fill(0.0);
  b.mutable_value().fill(0.0);
  hb.mutable_value().fill(0.0);
  sb.mutable_value().fill(bias);
}

TEST(PoolRegion, ConstantMap) {
  const FeatureMap fm{nn::Var(nn::Tensor({1, 3, 8, 8}, -0.25)), {8.0, 0.5}};
  const PooledFeature p = pool_region(fm, BoundingBox{13.0, 9.0, 30.0, 22.0});
  EXPECT_FALSE(p.outside);
  for (double v : p.values.value().values()) EXPECT_NEAR(v, -0.25, 1e-15);
}

TEST(PoolRegion, CellAlignedBoxReadsCells) {
  Rng rng(1);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  // Samples at box-cell centers x + (j + 0.5) w / 3 land on cells 2, 3, 4 when x = 8*1.5 + 0.5, w = 24.
  const PooledFeature p = pool_region(fm, BoundingBox{12.5, 4.5, 24.0, 24.0}, 3, 1);
  const nn::Tensor& v = p.values.value();
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(v[c * 9 + i * 3 + j], fm.values.value().at(0, c, 1 + i, 2 + j), 1e-12);
}

TEST(PoolRegion, OutsideBoxIsFlaggedAndZero) {
  Rng rng(2);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const PooledFeature p = pool_region(fm, BoundingBox{500.0, 500.0, 20.0, 20.0});
  EXPECT_TRUE(p.outside);
  for (double v : p.values.value().values()) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(pool_region(fm, BoundingBox{-20.0, -20.0, 25.0, 25.0}).outside);
  EXPECT_THROW(pool_region(fm, BoundingBox{1, 1, 0, 3}), ShapeError);
}

TEST(PoolRegion, GradientsInMapAndBox) {
  Rng rng(3);
  FeatureMap fm = random_map(3, 8, 8, rng);
  fm.values = nn::parameter(fm.values.value());
  nn::Var box = nn::parameter(nn::Tensor({4}, {10.3, 14.2, 27.1, 19.6}));
  nn::Tensor probe({3, 3, 3});
  for (double& v : probe.values()) v = gaussian(rng, 1.0);
  auto loss = [&] { return nn::sum(pool_region(fm, box).values * nn::Var(probe)); };
  const auto report = haft::testing::check_gradients(loss, {{"map", fm.values}, {"box", box}});
  for (const auto& e : report.entries) EXPECT_LT(e.relative_error, 1e-3) << e.name;
}

TEST(PredictIou, ZeroModulationGivesBias) {
  Rng rng(4);
  const IouHeadParams head(2, 3, rng);
  zero_modulation(head, 0.37);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const PooledFeature t = pool_region(fm, BoundingBox{10, 10, 20, 20});
  const PooledFeature c = pool_region(fm, BoundingBox{20, 14, 24, 18});
  EXPECT_DOUBLE_EQ(predict_iou(head, t, c).item(), 0.37);
}

// Plain-loop forward pass of the head.
double manual_iou(const IouHeadParams& head, const nn::Tensor& tpl, const nn::Tensor& cand) {
  const int d = head.dim();
  auto linear = [](const nn::Linear& l, const std::vector<double>& x) {
    const nn::Tensor& w = l.weight.value();
    const int out = l.bias.value().size();
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
      y[o] = l.bias.value()[o];
      for (std::size_t i = 0; i < x.size(); ++i) y[o] += w[o * x.size() + i] * x[i];
    }
    return y;
  };
  const std::vector<double> m = linear(head.modulation(), {tpl.values().begin(), tpl.values().end()});
  std::vector<double> mc(d);
  for (int i = 0; i < d; ++i) mc[i] = m[i] * cand[i];
  std::vector<double> h = linear(head.hidden(), mc);
  for (double& v : h) v = std::max(v, 0.0);
  return linear(head.score(), h)[0];
}

TEST(PredictIou, MatchesPlainLoopForward) {
  Rng rng(5);
  const IouHeadParams head(2, 3, rng, 7);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const PooledFeature t = pool_region(fm, BoundingBox{10, 10, 20, 20});
  for (int trial = 0; trial < 5; ++trial) {
    nn::Tensor c({2, 3, 3});
    for (double& v : c.values()) v = gaussian(rng, 1.0);
    EXPECT_NEAR(predict_iou(head, t, {nn::Var(c)}).item(), manual_iou(head, t.values.value(), c), 1e-12);
  }
}

TEST(PredictIou, BatchedMatchesSingle) {
  Rng rng(6);
  const IouHeadParams head(2, 3, rng);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const PooledFeature t = pool_region(fm, BoundingBox{10, 10, 20, 20});
  std::vector<PooledFeature> pools;
  for (int i = 0; i < 4; ++i) pools.push_back(pool_region(fm, BoundingBox{8.0 + 3 * i, 12.0, 18.0, 20.0 + i}));
  const nn::Tensor batched = predict_iou(head, t, pools).value();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(batched[i], predict_iou(head, t, pools[i]).item(), 1e-12);
}

TEST(PredictIou, GradientThroughPoolingInBox) {
  Rng rng(7);
  const IouHeadParams head(3, 3, rng);
  const FeatureMap fm = random_map(3, 8, 8, rng);
  const PooledFeature t = pool_region(fm, BoundingBox{12, 12, 24, 20});
  nn::Var box = nn::parameter(nn::Tensor({4}, {14.7, 11.3, 22.9, 25.4}));
  auto loss = [&] { return predict_iou(head, t, pool_region(fm, box)); };
  EXPECT_LT(haft::testing::check_gradients(loss, {{"box", box}}).worst(), 1e-3);
}

// Monte-Carlo estimate of IoU by uniform point sampling over the union's bounding rectangle.
double monte_carlo_iou(const BoundingBox& a, const BoundingBox& b, Rng& rng, int n) {
  const double x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.x + a.w, b.x + b.w), y1 = std::max(a.y + a.h, b.y + b.h);
  int inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double px = uniform(rng, x0, x1), py = uniform(rng, y0, y1);
    const bool ia = px >= a.x && px < a.x + a.w && py >= a.y && py < a.y + a.h;
    const bool ib = px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h;
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

TEST(SizeLoss, AnalyticIouMatchesMonteCarlo) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const BoundingBox a{uniform(rng, 0, 20), uniform(rng, 0, 20), uniform(rng, 5, 30), uniform(rng, 5, 30)};
    const BoundingBox b{uniform(rng, 0, 20), uniform(rng, 0, 20), uniform(rng, 5, 30), uniform(rng, 5, 30)};
    EXPECT_NEAR(box_iou(a, b), monte_carlo_iou(a, b, rng, 200000), 0.01);
  }
}

TEST(SizeLoss, ClosedFormValues) {
  Rng rng(9);
  const IouHeadParams head(2, 3, rng);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const BoundingBox gt{20, 20, 24, 24};
  const PooledFeature t = pool_region(fm, gt);
  zero_modulation(head, 1.0);
  EXPECT_EQ(size_regression_loss(head, t, fm, {gt}, gt).item(), 0.0);
  zero_modulation(head, 0.0);
  EXPECT_DOUBLE_EQ(size_regression_loss(head, t, fm, {gt, gt, gt}, gt).item(), 1.0);
}

TEST(SizeLoss, CandidateOrderInvariantAndSampledIouBounded) {
  Rng rng(10);
  const IouHeadParams head(2, 3, rng);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const BoundingBox gt{20, 18, 22, 26};
  const PooledFeature t = pool_region(fm, gt);
  std::vector<BoundingBox> c = sample_candidates(gt, {6, 0.3, 0.1}, rng);
  ASSERT_EQ(c.size(), 6u);
  for (const auto& b : c) EXPECT_GE(box_iou(b, gt), 0.1);
  const double a = size_regression_loss(head, t, fm, c, gt).item();
  std::reverse(c.begin(), c.end());
  EXPECT_NEAR(size_regression_loss(head, t, fm, c, gt).item(), a, 1e-12);
  EXPECT_THROW(sample_candidates(gt, {3, 0.3, 1.5}, rng), DataError);
}

TEST(SizeLoss, CandidatesCoverNearAndFarBoxes) {
  Rng rng(14);
  const BoundingBox gt{30, 30, 20, 28};
  const std::vector<BoundingBox> c = sample_candidates(gt, {400, 0.3, 0.1}, rng);
  int near = 0, far = 0;
  for (const auto& b : c) {
    const double iou = box_iou(b, gt);
    near += iou > 0.8;
    far += iou < 0.4;
  }
  EXPECT_GT(near, 80);
  EXPECT_GT(far, 40);
}

TEST(RefineBox, StationaryPointReturnsStart) {
  Rng rng(11);
  const IouHeadParams head(2, 3, rng);
  zero_modulation(head, 0.5);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const BoundingBox box0{20, 20, 24, 24};
  const RefineResult r = refine_box(head, pool_region(fm, box0), fm, box0, {5});
  EXPECT_EQ(r.box, box0);
}

// Trains a head on one feature map, then checks the ascent guarantee.
TEST(RefineBox, TrainedHeadAscendsMonotonically) {
  Rng rng(12);
  const IouHeadParams head(4, 3, rng);
  FeatureMap fm = random_map(4, 8, 8, rng);
  const BoundingBox gt{22, 18, 20, 24};
  const PooledFeature tpl = pool_region(fm, gt);
  nn::ParamList params;
  head.collect(params, "iou");
  for (int it = 0; it < 300; ++it) {
    for (auto& p : params) p.var.zero_grad();
    size_loss(head, tpl, fm, gt, {16, 0.3, 0.1}, rng).backward();
    for (auto& p : params) nn::axpy(-0.02, p.var.grad(), p.var.mutable_value());
  }
  int improved = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const BoundingBox start = BoundingBox::from_center(gt.center_x() + gaussian(rng, 4.0),
                                                       gt.center_y() + gaussian(rng, 4.0), gt.w * 1.2, gt.h * 0.85);
    const RefineResult r = refine_box(head, tpl, fm, start, {5});
    ASSERT_GE(r.trajectory.size(), 1u);
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) EXPECT_GE(r.trajectory[i], r.trajectory[i - 1]);
    EXPECT_GE(r.box.w, 4.0);
    improved += r.trajectory.back() > r.trajectory.front();
  }
  EXPECT_GE(improved, 5);
}

TEST(RefineBox, SingleStepMakesOneProposal) {
  Rng rng(13);
  const IouHeadParams head(2, 3, rng);
  const FeatureMap fm = random_map(2, 8, 8, rng);
  const BoundingBox box0{18, 22, 20, 20};
  const RefineResult r = refine_box(head, pool_region(fm, box0), fm, box0, {1});
  EXPECT_LE(r.trajectory.size(), 2u);
  EXPECT_THROW(refine_box(head, pool_region(fm, box0), fm, box0, {0}), ConfigError);
}

}  // namespace
}  // namespace haft
