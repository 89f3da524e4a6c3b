#include "haft/predictor.hpp"

#include "haft/errors.hpp"

namespace haft {
namespace {

void require_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.values.shape() != b.values.shape()) {
    throw ShapeError(std::string(what) + ": feature shape " + nn::shape_string(a.values.shape()) +
                     " does not match " + nn::shape_string(b.values.shape()));
  }
}

}  // namespace

PredictorParams::PredictorParams(int channels, Rng& rng)
    : channels_(channels),
      update_gate_(3 * channels, channels, 3, 1, 1, rng, 0.5),
      reset_gate_(3 * channels, channels, 3, 1, 1, rng, 0.5),
      candidate_(3 * channels, channels, 3, 1, 1, rng, 0.5),
      output_(channels, channels, 1, 1, 0, rng, 0.5) {}

void PredictorParams::collect(nn::ParamList& out, const std::string& prefix) const {
  update_gate_.collect(out, prefix + ".update_gate");
  reset_gate_.collect(out, prefix + ".reset_gate");
  candidate_.collect(out, prefix + ".candidate");
  output_.collect(out, prefix + ".output");
}

PredictorState init_state(const FeatureMap& template_feature) {
  if (template_feature.values.shape().size() != 4) throw ShapeError("template feature must be [B,C,h,w]");
  return {nn::Var(nn::Tensor(template_feature.values.shape())), template_feature};
}

FeatureMap condition_input(const PredictorState& state, const FeatureMap& alpha) {
  require_shape(state.template_feature, alpha, "condition_input");
  return {nn::concat({state.template_feature.values, alpha.values}, 1), alpha.geometry};
}

std::pair<PredictorState, FeatureMap> predict_next(const PredictorParams& params, const PredictorState& state,
                                                   const FeatureMap& alpha) {
  if (alpha.channels() != params.channels()) throw ShapeError("predictor channel count mismatch");
  if (!state.hidden.value().all_finite()) throw DivergenceError("non-finite predictor hidden state");

  const FeatureMap input = condition_input(state, alpha);
  const nn::Var& h = state.hidden;
  const nn::Var gates_in = nn::concat({input.values, h}, 1);
  const nn::Var z = nn::sigmoid(params.update_gate()(gates_in));
  const nn::Var r = nn::sigmoid(params.reset_gate()(gates_in));
  const nn::Var h_tilde = nn::tanh(params.candidate()(nn::concat({input.values, r * h}, 1)));
  // (1 - z) * h + z * h_tilde
  const nn::Var h_next = h + z * (h_tilde - h);
  const nn::Var eta = params.output()(h_next);
  if (!eta.value().all_finite()) throw DivergenceError("non-finite predictor output");
  return {PredictorState{h_next, state.template_feature}, FeatureMap{eta, alpha.geometry}};
}

std::vector<FeatureMap> rollout(const PredictorParams& params, const FeatureMap& template_feature,
                                const std::vector<FeatureMap>& alphas) {
  if (alphas.empty()) throw ShapeError("rollout needs at least one observation");
  PredictorState state = init_state(template_feature);
  std::vector<FeatureMap> etas;
  etas.reserve(alphas.size());
  for (const FeatureMap& alpha : alphas) {
    auto [next, eta] = predict_next(params, state, alpha);
    state = std::move(next);
    etas.push_back(std::move(eta));
  }
  return etas;
}

}  // namespace haft
