#pragma once

#include <array>
#include <vector>

#include "haft/data_io.hpp"
#include "haft/feature_map.hpp"
#include "haft/nn/layers.hpp"

namespace haft {

struct BackboneConfig {
  std::array<int, 4> channels{32, 64, 64, 64};
  std::array<int, 4> strides{2, 2, 2, 1};

  int output_channels() const { return channels.back(); }
  int total_stride() const { return strides[0] * strides[1] * strides[2] * strides[3]; }
};

/// Four 3x3 convolutions, each followed by batch normalization and ReLU.
class BackboneParams {
 public:
  BackboneParams() = default;
  BackboneParams(const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const noexcept { return config_; }
  /// [N,3,S,S] -> [N,C,S/8,S/8]
  nn::Var forward(const nn::Var& input, bool training) const;
  FeatureGeometry geometry() const;
  void collect(nn::ParamList& out, const std::string& prefix) const;

 private:
  BackboneConfig config_;
  std::array<nn::Conv2d, 4> convs_;
  std::array<nn::BatchNorm2d, 4> norms_;
};

/// Stacks patches into the network input: [N,3,S,S], pixel values shifted by -0.5.
nn::Tensor patches_to_tensor(const std::vector<const Image*>& patches);

/// Throws ShapeError when the patch side is not divisible by the total stride.
FeatureMap extract_features(const BackboneParams& params, const SamplePatch& patch, bool training = false);
FeatureMap extract_features(const BackboneParams& params, const std::vector<const Image*>& patches, bool training);

}  // namespace haft
