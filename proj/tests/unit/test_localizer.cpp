#include <gtest/gtest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "haft/errors.hpp"
#include "haft/localizer.hpp"
#include "haft/rng.hpp"

namespace haft {
namespace {

nn::Tensor random_tensor(nn::Shape shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = gaussian(rng, 1.0);
  return t;
}

TEST(GaussianLabel, ClosedFormValues) {
  const LabelMap z = gaussian_label(4.0, 6.0, 1.5, 10, 12);
  EXPECT_EQ(z.values[4 * 12 + 6], 1.0);
  const LabelMap u = gaussian_label(5.0, 5.0, 2.0, 11, 11);
  EXPECT_NEAR(u.values[5 * 11 + 7], std::exp(-0.5), 1e-15);
  for (double v : u.values.values()) EXPECT_TRUE(v > 0.0 && v <= 1.0);
  EXPECT_THROW(gaussian_label(1, 1, 0.0, 4, 4), ConfigError);
}

TEST(GaussianLabel, SymmetricAboutOnGridCenter) {
  const LabelMap z = gaussian_label(5.0, 5.0, 1.3, 11, 11);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      EXPECT_EQ(z.values[i * 11 + j], z.values[(10 - i) * 11 + j]);
      EXPECT_EQ(z.values[i * 11 + j], z.values[i * 11 + (10 - j)]);
    }
}

TEST(GaussianLabel, PeakAtNearestCell) {
  const LabelMap z = gaussian_label(3.3, 6.7, 1.0, 10, 10);
  std::size_t best = 0;
  for (std::size_t i = 0; i < z.values.size(); ++i)
    if (z.values[i] > z.values[best]) best = i;
  EXPECT_EQ(best, 3u * 10 + 7);
}

TEST(RegionWeight, DoubledWithinTwoSigma) {
  const LabelMap z = gaussian_label(5, 5, 1.0, 11, 11);
  const nn::Tensor w = region_weight(z, 1.0, 2.0);
  EXPECT_EQ(w[5 * 11 + 5], 2.0);
  EXPECT_EQ(w[5 * 11 + 7], 2.0);
  EXPECT_EQ(w[5 * 11 + 8], 1.0);
  EXPECT_EQ(w[0], 1.0);
}

TEST(Correlate, ZeroFilterAndIdentityKernel) {
  Rng rng(1);
  const nn::Tensor x = random_tensor({3, 6, 7}, rng);
  const nn::Tensor r0 = correlate(x, Filter::zeros(3, 5));
  for (double v : r0.values()) EXPECT_EQ(v, 0.0);

  nn::Tensor single({3, 6, 7});
  single[1 * 42 + 2 * 7 + 3] = 2.5;
  Filter delta = Filter::zeros(3, 5);
  delta.values[1 * 25 + 2 * 5 + 2] = 1.0;
  const nn::Tensor r = correlate(single, delta);
  ASSERT_EQ(r.shape(), (nn::Shape{6, 7}));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 7; ++j) EXPECT_EQ(r[i * 7 + j], single[42 + i * 7 + j]);
}

TEST(Correlate, MatchesDirectSumAndIsBilinear) {
  Rng rng(2);
  const nn::Tensor x = random_tensor({2, 5, 6}, rng);
  const nn::Tensor x2 = random_tensor({2, 5, 6}, rng);
  Filter f{random_tensor({2, 3, 3}, rng)};
  Filter g{random_tensor({2, 3, 3}, rng)};
  const nn::Tensor r = correlate(x, f);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int c = 0; c < 2; ++c)
        for (int u = -1; u <= 1; ++u)
          for (int v = -1; v <= 1; ++v) {
            const int ii = i + u, jj = j + v;
            if (ii < 0 || ii >= 5 || jj < 0 || jj >= 6) continue;
            s += x[c * 30 + ii * 6 + jj] * f.values[c * 9 + (u + 1) * 3 + (v + 1)];
          }
      EXPECT_NEAR(r[i * 6 + j], s, 1e-12);
    }
  Filter scaled = f;
  for (double& v : scaled.values.values()) v *= -2.5;
  Filter sum = f;
  nn::axpy(1.0, g.values, sum.values);
  nn::Tensor xs = x;
  nn::axpy(1.0, x2, xs);
  const nn::Tensor ra = correlate(x, scaled), rb = correlate(x, sum), rc = correlate(xs, f);
  const nn::Tensor rg = correlate(x, g), rx2 = correlate(x2, f);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(ra[i], -2.5 * r[i], 1e-12);
    EXPECT_NEAR(rb[i], r[i] + rg[i], 1e-12);
    EXPECT_NEAR(rc[i], r[i] + rx2[i], 1e-12);
  }
  EXPECT_THROW(correlate(x, Filter::zeros(3, 3)), ShapeError);
}

TEST(Correlate, DifferentiableFormAgrees) {
  Rng rng(3);
  nn::Var x = nn::parameter(random_tensor({2, 3, 5, 5}, rng));
  nn::Var f = nn::parameter(random_tensor({3, 3, 3}, rng));
  const nn::Tensor out = correlate(x, f).value();
  ASSERT_EQ(out.shape(), (nn::Shape{2, 1, 5, 5}));
  for (int b = 0; b < 2; ++b) {
    nn::Tensor item({3, 5, 5});
    std::copy(x.value().data() + b * 75, x.value().data() + (b + 1) * 75, item.data());
    const nn::Tensor r = correlate(item, Filter{f.value()});
    for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(out[b * 25 + i], r[i], 1e-12);
  }
}

TEST(Residual, Contracts) {
  Rng rng(4);
  const nn::Tensor resp = random_tensor({4, 4}, rng);
  const nn::Tensor label = random_tensor({4, 4}, rng);
  const nn::Tensor ones({4, 4}, 1.0);
  const nn::Tensor exact = localization_residual(label, label, ones);
  const nn::Tensor unweighted = localization_residual(resp, label, nn::Tensor({4, 4}));
  for (double v : exact.values()) EXPECT_EQ(v, 0.0);
  for (double v : unweighted.values()) EXPECT_EQ(v, 0.0);
  nn::Tensor doubled = label;
  for (std::size_t i = 0; i < doubled.size(); ++i) doubled[i] = label[i] + 2.0 * (resp[i] - label[i]);
  const nn::Tensor r1 = localization_residual(resp, label, ones), r2 = localization_residual(doubled, label, ones);
  for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_NEAR(r2[i], 2.0 * r1[i], 1e-12);
  EXPECT_THROW(localization_residual(resp, nn::Tensor({3, 4}), ones), ShapeError);
}

TEST(SampleMemory, CapacityDecayAndReplacement) {
  SampleMemory mem(3, 0.5);
  const LabelMap z = gaussian_label(1, 1, 1.0, 3, 3);
  for (int i = 0; i < 5; ++i) mem.insert(nn::Tensor({2, 3, 3}, static_cast<double>(i)), z, nn::Tensor({3, 3}, 1.0));
  EXPECT_EQ(mem.size(), 3);
  double total = 0.0;
  for (double w : mem.normalized_weights()) {
    EXPECT_GT(w, 0.0);
    total += w;
  }
  EXPECT_NEAR(total, 1.0, 1e-15);
  // Samples 2, 3, 4 remain with raw weights 0.25, 0.5, 1.
  double oldest = 1e9;
  for (const auto& s : mem.samples()) oldest = std::min(oldest, s.features[0]);
  EXPECT_EQ(oldest, 2.0);
  for (const auto& s : mem.samples()) EXPECT_DOUBLE_EQ(s.sample_weight, std::pow(0.5, 4.0 - s.features[0]));
}

// Planted instance: labels generated by a known filter.
SampleMemory planted_memory(const Filter& truth, Rng& rng, int samples) {
  SampleMemory mem(samples, 0.99);
  for (int s = 0; s < samples; ++s) {
    const nn::Tensor x = random_tensor({truth.channels(), 8, 8}, rng);
    LabelMap z{correlate(x, truth), 0.0, 0.0};
    mem.insert(x, z, nn::Tensor({8, 8}, 1.0));
  }
  return mem;
}

TEST(LearnFilter, RecoversPlantedSolution) {
  Rng rng(5);
  const Filter truth{random_tensor({4, 5, 5}, rng)};
  const SampleMemory mem = planted_memory(truth, rng, 6);
  const Filter f0 = Filter::zeros(4, 5);
  std::vector<double> history;
  learn_filter(mem, f0, 30, 0.0, &history);
  ASSERT_EQ(history.size(), 31u);
  EXPECT_LE(history.back(), 0.1 * history.front());
  for (std::size_t i = 1; i < history.size(); ++i) EXPECT_LE(history[i], history[i - 1] * (1.0 + 1e-12));
}

TEST(LearnFilter, ObjectiveNonIncreasingWithRegularizationAndWeights) {
  Rng rng(6);
  SampleMemory mem(10, 0.9);
  for (int s = 0; s < 7; ++s) {
    const LabelMap z = gaussian_label(uniform(rng, 0, 7), uniform(rng, 0, 7), 1.0, 8, 8);
    mem.insert(random_tensor({3, 8, 8}, rng), z, region_weight(z, 1.0, 2.0));
  }
  std::vector<double> history;
  const Filter f = learn_filter(mem, Filter{random_tensor({3, 5, 5}, rng)}, 20, 0.05, &history);
  for (std::size_t i = 1; i < history.size(); ++i) EXPECT_LE(history[i], history[i - 1] * (1.0 + 1e-12));
  EXPECT_NEAR(history.back(), filter_objective(mem, f, 0.05), 1e-9 * history.front());
}

TEST(LearnFilter, IterationContract) {
  Rng rng(7);
  const Filter truth{random_tensor({2, 3, 3}, rng)};
  const SampleMemory mem = planted_memory(truth, rng, 3);
  EXPECT_THROW(learn_filter(mem, Filter::zeros(2, 3), 0, 0.0), ConfigError);
  std::vector<double> history;
  const Filter one = learn_filter(mem, Filter::zeros(2, 3), 1, 0.0, &history);
  EXPECT_EQ(history.size(), 2u);
  EXPECT_LT(history[1], history[0]);
  // One step from zero moves along the negative gradient, i.e. along A^T z.
  EXPECT_GT(nn::squared_norm(one.values), 0.0);
  EXPECT_THROW(learn_filter(SampleMemory(3), Filter::zeros(2, 3), 1, 0.0), ShapeError);
}

TEST(LearnFilter, LargeRidgeShrinksFilter) {
  Rng rng(8);
  const Filter truth{random_tensor({2, 3, 3}, rng)};
  const SampleMemory mem = planted_memory(truth, rng, 3);
  const Filter f0{random_tensor({2, 3, 3}, rng)};
  const Filter f = learn_filter(mem, f0, 5, 1e6);
  EXPECT_LT(nn::squared_norm(f.values), 1e-3 * nn::squared_norm(f0.values));
}

TEST(LearnFilter, ZeroGradientWithResidualReturnsStart) {
  // Zero features: correlation is identically zero, gradient vanishes, labels remain.
  SampleMemory mem(2);
  const LabelMap z = gaussian_label(2, 2, 1.0, 5, 5);
  mem.insert(nn::Tensor({2, 5, 5}), z, nn::Tensor({5, 5}, 1.0));
  const Filter f0 = Filter::zeros(2, 3);
  const Filter f = learn_filter(mem, f0, 3, 0.0);
  EXPECT_TRUE(f.values == f0.values);
}

TEST(LocalizationLoss, ClosedFormsAndGradient) {
  const nn::Tensor label({4, 5}, 0.3);
  const nn::Tensor ones({4, 5}, 1.0);
  EXPECT_EQ(localization_loss({nn::Var(label)}, {label}, {ones}).item(), 0.0);
  nn::Tensor off = label;
  off[7] += 0.4;
  EXPECT_NEAR(localization_loss({nn::Var(off)}, {label}, {ones}).item(), 0.16 / 20.0, 1e-15);
  EXPECT_THROW(localization_loss({}, {}, {}), ShapeError);

  Rng rng(9);
  nn::Var x = nn::parameter(random_tensor({2, 3, 5, 5}, rng));
  nn::Var f = nn::parameter(random_tensor({3, 3, 3}, rng));
  std::vector<nn::Tensor> labels, weights;
  for (int t = 0; t < 2; ++t) {
    const LabelMap z = gaussian_label(2.2, 1.7, 1.0, 5, 5);
    nn::Tensor l({2, 1, 5, 5}), w({2, 1, 5, 5});
    const nn::Tensor rw = region_weight(z, 1.0, 2.0);
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 25; ++i) l[b * 25 + i] = z.values[i], w[b * 25 + i] = rw[i];
    labels.push_back(l);
    weights.push_back(w);
  }
  auto loss = [&] {
    const nn::Var r = correlate(x, f);
    return localization_loss({r, nn::affine(r, 0.5)}, labels, weights);
  };
  const auto report = haft::testing::check_gradients(loss, {{"features", x}, {"filter", f}});
  for (const auto& e : report.entries) EXPECT_LT(e.relative_error, 1e-3) << e.name;
}

TEST(Localize, SinglePeak) {
  nn::Tensor r({10, 12}, 0.1);
  r[4 * 12 + 7] = 1.0;
  const Localization loc = localize(r, {8.0, 0.5});
  EXPECT_DOUBLE_EQ(loc.cell_x, 7.0);
  EXPECT_DOUBLE_EQ(loc.cell_y, 4.0);
  EXPECT_DOUBLE_EQ(loc.x, 0.5 + 8.0 * 7);
  EXPECT_DOUBLE_EQ(loc.y, 0.5 + 8.0 * 4);
  EXPECT_DOUBLE_EQ(loc.confidence, 1.0);
}

TEST(Localize, ConstantResponseTieBreak) {
  const nn::Tensor r({6, 6}, 0.42);
  const Localization loc = localize(r, {8.0, 0.5});
  EXPECT_EQ(loc.cell_x, 0.0);
  EXPECT_EQ(loc.cell_y, 0.0);
  EXPECT_EQ(loc.confidence, 0.42);
}

TEST(Localize, QuadraticBumpSubCellAccuracy) {
  nn::Tensor r({12, 14});
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 14; ++j) {
      const double dy = i - 4.3, dx = j - 7.6;
      r[i * 14 + j] = 5.0 - 0.8 * dy * dy - 0.5 * dx * dx + 0.2 * dx * dy;
    }
  const Localization loc = localize(r, {8.0, 0.5});
  EXPECT_NEAR(loc.cell_y, 4.3, 0.1);
  EXPECT_NEAR(loc.cell_x, 7.6, 0.1);
}

TEST(Localize, InvariantToConstantShift) {
  Rng rng(10);
  const nn::Tensor r = random_tensor({8, 9}, rng);
  nn::Tensor shifted = r;
  for (double& v : shifted.values()) v += 3.0;
  const Localization a = localize(r, {}), b = localize(shifted, {});
  EXPECT_NEAR(a.cell_x, b.cell_x, 1e-9);
  EXPECT_NEAR(a.cell_y, b.cell_y, 1e-9);
  EXPECT_NEAR(b.confidence - a.confidence, 3.0, 1e-12);
}

}  // namespace
}  // namespace haft
