#include <gtest/gtest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "haft/errors.hpp"
#include "haft/predictor.hpp"

namespace haft {
namespace {

FeatureMap random_map(int c, int h, int w, Rng& rng, double sigma = 1.0) {
  nn::Tensor t({1, c, h, w});
  for (double& v : t.values()) v = gaussian(rng, sigma);
  return {nn::Var(std::move(t)), {}};
}

TEST(Predictor, InitStateIsZeroAndShaped) {
  Rng rng(1);
  const FeatureMap tpl = random_map(4, 5, 5, rng);
  const PredictorState a = init_state(tpl);
  const PredictorState b = init_state(tpl);
  EXPECT_EQ(a.hidden.shape(), tpl.values.shape());
  for (double v : a.hidden.value().values()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(a.hidden.value() == b.hidden.value());
  EXPECT_TRUE(a.template_feature.values.value() == tpl.values.value());
}

TEST(Predictor, ConditionInputPutsTemplateFirst) {
  Rng rng(2);
  const FeatureMap tpl = random_map(64, 4, 4, rng);
  const FeatureMap alpha = random_map(64, 4, 4, rng);
  const FeatureMap in = condition_input(init_state(tpl), alpha);
  ASSERT_EQ(in.channels(), 128);
  const nn::Tensor& v = in.values.value();
  for (int c = 0; c < 64; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        EXPECT_EQ(v.at(0, c, i, j), tpl.values.value().at(0, c, i, j));
        EXPECT_EQ(v.at(0, c + 64, i, j), alpha.values.value().at(0, c, i, j));
      }
  EXPECT_THROW(condition_input(init_state(tpl), random_map(64, 5, 4, rng)), ShapeError);
}

TEST(Predictor, HiddenStateStaysInOpenUnitInterval) {
  Rng rng(3);
  const PredictorParams params(6, rng);
  const FeatureMap tpl = random_map(6, 6, 6, rng, 2.0);
  PredictorState state = init_state(tpl);
  for (int step = 0; step < 12; ++step) {
    auto [next, eta] = predict_next(params, state, random_map(6, 6, 6, rng, 2.0));
    for (double v : next.hidden.value().values()) ASSERT_TRUE(v > -1.0 && v < 1.0);
    EXPECT_EQ(eta.values.shape(), tpl.values.shape());
    state = next;
  }
}

TEST(Predictor, BackpropThroughTimeMatchesCentralDifferences) {
  Rng rng(4);
  const PredictorParams params(2, rng);
  const FeatureMap tpl = random_map(2, 4, 4, rng);
  std::vector<FeatureMap> alphas;
  std::vector<nn::Tensor> probes;
  for (int t = 0; t < 5; ++t) {
    FeatureMap a = random_map(2, 4, 4, rng);
    a.values = nn::parameter(a.values.value());
    alphas.push_back(a);
    nn::Tensor p({1, 2, 4, 4});
    for (double& v : p.values()) v = gaussian(rng, 1.0);
    probes.push_back(p);
  }
  nn::ParamList list;
  params.collect(list, "predictor");
  std::vector<std::pair<std::string, nn::Var>> inputs;
  for (const auto& p : list) inputs.emplace_back(p.name, p.var);
  inputs.emplace_back("alpha0", alphas[0].values);
  inputs.emplace_back("alpha3", alphas[3].values);
  auto loss = [&] {
    const auto etas = rollout(params, tpl, alphas);
    nn::Var total;
    for (std::size_t t = 0; t < etas.size(); ++t) {
      const nn::Var term = nn::sum(etas[t].values * nn::Var(probes[t]));
      total = total.defined() ? total + term : term;
    }
    return total;
  };
  const auto report = haft::testing::check_gradients(loss, inputs);
  for (const auto& e : report.entries) EXPECT_LT(e.relative_error, 1e-3) << e.name;
}

TEST(Predictor, DeterministicStep) {
  Rng rng(5);
  const PredictorParams params(3, rng);
  const FeatureMap tpl = random_map(3, 4, 4, rng);
  const FeatureMap alpha = random_map(3, 4, 4, rng);
  const PredictorState s = init_state(tpl);
  const auto [s1, e1] = predict_next(params, s, alpha);
  const auto [s2, e2] = predict_next(params, s, alpha);
  EXPECT_TRUE(e1.values.value() == e2.values.value());
  EXPECT_TRUE(s1.hidden.value() == s2.hidden.value());
}

TEST(Predictor, RolloutIsCausalAndMatchesSteps) {
  Rng rng(6);
  const PredictorParams params(3, rng);
  const FeatureMap tpl = random_map(3, 4, 4, rng);
  std::vector<FeatureMap> alphas;
  for (int t = 0; t < 6; ++t) alphas.push_back(random_map(3, 4, 4, rng));

  const auto etas = rollout(params, tpl, alphas);
  ASSERT_EQ(etas.size(), alphas.size());
  PredictorState state = init_state(tpl);
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    auto [next, eta] = predict_next(params, state, alphas[t]);
    EXPECT_TRUE(eta.values.value() == etas[t].values.value());
    state = next;
  }

  const int k = 3;
  std::vector<FeatureMap> perturbed = alphas;
  perturbed[k] = random_map(3, 4, 4, rng);
  const auto etas2 = rollout(params, tpl, perturbed);
  for (int t = 0; t < k; ++t) EXPECT_TRUE(etas[t].values.value() == etas2[t].values.value());
  EXPECT_FALSE(etas[k].values.value() == etas2[k].values.value());

  EXPECT_EQ(rollout(params, tpl, {alphas[0]}).size(), 1u);
  EXPECT_THROW(rollout(params, tpl, {}), ShapeError);
}

TEST(Predictor, NonFiniteStateSignalsDivergence) {
  Rng rng(7);
  const PredictorParams params(2, rng);
  const FeatureMap tpl = random_map(2, 3, 3, rng);
  PredictorState state = init_state(tpl);
  state.hidden.mutable_value()[0] = std::nan("");
  EXPECT_THROW(predict_next(params, state, tpl), DivergenceError);
}

}  // namespace
}  // namespace haft
