#pragma once

#include <utility>
#include <vector>

#include "haft/feature_map.hpp"
#include "haft/nn/layers.hpp"

namespace haft {

/// Convolutional GRU that forecasts the next frame's feature map, conditioned on
/// the template feature. Gate convolutions see the 2C-channel conditioned input
/// together with the C-channel hidden state; a 1x1 projection maps the hidden
/// state to the forecast.
class PredictorParams {
 public:
  PredictorParams() = default;
  PredictorParams(int channels, Rng& rng);

  int channels() const noexcept { return channels_; }
  void collect(nn::ParamList& out, const std::string& prefix) const;

  const nn::Conv2d& update_gate() const { return update_gate_; }
  const nn::Conv2d& reset_gate() const { return reset_gate_; }
  const nn::Conv2d& candidate() const { return candidate_; }
  const nn::Conv2d& output() const { return output_; }

 private:
  int channels_ = 0;
  nn::Conv2d update_gate_;
  nn::Conv2d reset_gate_;
  nn::Conv2d candidate_;
  nn::Conv2d output_;
};

struct PredictorState {
  nn::Var hidden;            // [B,C,h,w]
  FeatureMap template_feature;  // alpha_1, never modified after init
};

/// Zero hidden state shaped like the template.
PredictorState init_state(const FeatureMap& template_feature);

/// Channel concatenation [template, alpha_t].
FeatureMap condition_input(const PredictorState& state, const FeatureMap& alpha);

/// One GRU step on alpha_t; returns the new state and the forecast for frame t+1.
/// Throws DivergenceError on non-finite values.
std::pair<PredictorState, FeatureMap> predict_next(const PredictorParams& params, const PredictorState& state,
                                                   const FeatureMap& alpha);

/// Forecasts for frames 2..|alphas|+1 from a zero state; output k sees alphas[0..k] only.
std::vector<FeatureMap> rollout(const PredictorParams& params, const FeatureMap& template_feature,
                                const std::vector<FeatureMap>& alphas);

}  // namespace haft
