#include <gtest/gtest.h>

#include "../support/gradcheck.hpp"
#include "haft/backbone.hpp"
#include "haft/errors.hpp"

namespace haft {
namespace {

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (float& p : img.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
  return img;
}

SamplePatch patch_of(Image img) {
  SamplePatch p;
  p.pixels = std::move(img);
  return p;
}

BackboneConfig tiny_config() {
  BackboneConfig c;
  c.channels = {4, 4, 4, 4};
  return c;
}

TEST(Backbone, OutputShapeAtStrideEight) {
  Rng rng(1);
  const BackboneParams params(BackboneConfig{}, rng);
  const FeatureMap fm = extract_features(params, patch_of(random_image(128, 128, rng)));
  EXPECT_EQ(fm.values.shape(), (nn::Shape{1, 64, 16, 16}));
  EXPECT_DOUBLE_EQ(fm.geometry.stride, 8.0);
  EXPECT_TRUE(fm.values.value().all_finite());
}

TEST(Backbone, ZeroPatchIsDeterministic) {
  Rng rng(2);
  const BackboneParams params(tiny_config(), rng);
  const SamplePatch zero = patch_of(Image(32, 32, 0.0f));
  const nn::Tensor a = extract_features(params, zero).values.value();
  const nn::Tensor b = extract_features(params, zero).values.value();
  EXPECT_TRUE(a == b);
}

TEST(Backbone, RejectsSizesNotDivisibleByStride) {
  Rng rng(3);
  const BackboneParams params(tiny_config(), rng);
  EXPECT_THROW(extract_features(params, patch_of(Image(36, 32))), ShapeError);
}

TEST(Backbone, ParameterGradientsMatchCentralDifferences) {
  Rng rng(4);
  const BackboneParams params(tiny_config(), rng);
  const Image a = random_image(16, 16, rng);
  const Image b = random_image(16, 16, rng);
  nn::Tensor probe({2, 4, 2, 2});
  for (double& v : probe.values()) v = gaussian(rng, 1.0);
  nn::ParamList list;
  params.collect(list, "backbone");
  std::vector<std::pair<std::string, nn::Var>> inputs;
  for (const auto& p : list) {
    if (p.trainable) inputs.emplace_back(p.name, p.var);
  }
  auto loss = [&] {
    const FeatureMap fm = extract_features(params, std::vector<const Image*>{&a, &b}, true);
    return nn::sum(fm.values * nn::Var(probe));
  };
  // Rectifier kinks sit within 1e-3 of some pre-activations, so the step is smaller here.
  const auto report = haft::testing::check_gradients(loss, inputs, 1e-6);
  for (const auto& e : report.entries) EXPECT_LT(e.relative_error, 1e-3) << e.name << " numeric norm " << e.numeric_norm;
}

TEST(Backbone, TranslationCovariantUpToStride) {
  Rng rng(5);
  const BackboneParams params(BackboneConfig{{8, 8, 8, 8}, {2, 2, 2, 1}}, rng);
  const Image wide = random_image(64, 72, rng);
  Image left(64, 64), right(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) {
        left.at(y, x, c) = wide.at(y, x, c);
        right.at(y, x, c) = wide.at(y, x + 8, c);
      }
  const nn::Tensor fa = extract_features(params, patch_of(left)).values.value();
  const nn::Tensor fb = extract_features(params, patch_of(right)).values.value();
  double worst = 0.0;
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 2; j <= 5; ++j) worst = std::max(worst, std::abs(fb.at(0, c, i, j) - fa.at(0, c, i, j + 1)));
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
}  // namespace haft
