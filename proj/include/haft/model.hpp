#pragma once

#include <cstdint>

#include "haft/adversary.hpp"
#include "haft/backbone.hpp"
#include "haft/data_io.hpp"
#include "haft/localizer.hpp"
#include "haft/predictor.hpp"
#include "haft/size_estimator.hpp"

namespace haft {

struct ModelConfig {
  BackboneConfig backbone;
  int disc_width = 64;
  int pool_size = 3;
  CropConfig crop;
  LocalizerConfig localizer;
};

/// Every learned component. The discriminator is needed only for training.
class HaftModel {
 public:
  HaftModel() = default;
  HaftModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  int channels() const { return config_.backbone.output_channels(); }

  /// Backbone, predictor and IoU head arrays, including normalization buffers.
  nn::ParamList generator_arrays() const;
  nn::ParamList discriminator_arrays() const;
  nn::ParamList all_arrays() const;

  /// Deep copy; no parameter storage is shared with this model.
  HaftModel clone() const;

  BackboneParams backbone;
  PredictorParams predictor;
  IouHeadParams iou_head;
  DiscriminatorParams discriminator;

 private:
  ModelConfig config_;
};

/// Trainable subset of `arrays`.
nn::ParamList trainable(const nn::ParamList& arrays);

}  // namespace haft
