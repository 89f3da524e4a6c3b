#pragma once

#include <array>
#include <vector>

#include "haft/feature_map.hpp"
#include "haft/nn/layers.hpp"

namespace haft {

struct DiscriminatorConfig {
  int input_channels = 64;  // C of each half of the conditioned pair
  int width = 64;
};

/// Conditional discriminator: three conv + BN + LeakyReLU(0.2) layers with
/// strides 2, 2, 1, global average pooling and a linear scoring head.
class DiscriminatorParams {
 public:
  DiscriminatorParams() = default;
  DiscriminatorParams(const DiscriminatorConfig& config, Rng& rng);

  const DiscriminatorConfig& config() const noexcept { return config_; }
  const std::array<nn::Conv2d, 3>& convs() const noexcept { return convs_; }
  const std::array<nn::BatchNorm2d, 3>& norms() const noexcept { return norms_; }
  const nn::Linear& head() const noexcept { return head_; }
  void collect(nn::ParamList& out, const std::string& prefix) const;

 private:
  DiscriminatorConfig config_;
  std::array<nn::Conv2d, 3> convs_;
  std::array<nn::BatchNorm2d, 3> norms_;
  nn::Linear head_;
};

/// Logits [B] for the pairs (condition[b], candidate[b]). `training` selects batch
/// statistics (and updates the running estimates) instead of the running ones.
nn::Var discriminate(const DiscriminatorParams& params, const FeatureMap& condition, const FeatureMap& candidate,
                     bool training = false);

inline constexpr double kLogitClamp = 30.0;

/// mean of -log sigma(real) - log(1 - sigma(fake)), logits clamped to +-30.
nn::Var loss_discriminator(const nn::Var& real_logits, const nn::Var& fake_logits);
/// Discriminator loss on detached inputs: gradients reach only the discriminator.
nn::Var discriminator_objective(const DiscriminatorParams& params, const FeatureMap& condition,
                                const FeatureMap& real, const FeatureMap& fake, bool training);
/// mean of -log sigma(fake)
nn::Var loss_generator(const nn::Var& fake_logits);
/// Mean over pairs of the mean squared difference.
nn::Var loss_reconstruction(const std::vector<FeatureMap>& etas, const std::vector<FeatureMap>& betas);

}  // namespace haft
