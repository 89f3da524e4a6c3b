#include "haft/model.hpp"

#include "haft/errors.hpp"

namespace haft {

HaftModel::HaftModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.crop.patch_size % config.backbone.total_stride() != 0) {
    throw ConfigError("patch size " + std::to_string(config.crop.patch_size) + " is not divisible by the stride " +
                      std::to_string(config.backbone.total_stride()));
  }
  if (config.localizer.filter_size % 2 == 0) throw ConfigError("filter size must be odd");
  Rng backbone_rng = make_rng(seed, "init.backbone");
  Rng predictor_rng = make_rng(seed, "init.predictor");
  Rng iou_rng = make_rng(seed, "init.iou_head");
  Rng disc_rng = make_rng(seed, "init.discriminator");
  backbone = BackboneParams(config.backbone, backbone_rng);
  predictor = PredictorParams(channels(), predictor_rng);
  iou_head = IouHeadParams(channels(), config.pool_size, iou_rng);
  discriminator = DiscriminatorParams({channels(), config.disc_width}, disc_rng);
}

nn::ParamList HaftModel::generator_arrays() const {
  nn::ParamList out;
  backbone.collect(out, "backbone");
  predictor.collect(out, "predictor");
  iou_head.collect(out, "iou_head");
  return out;
}

nn::ParamList HaftModel::discriminator_arrays() const {
  nn::ParamList out;
  discriminator.collect(out, "discriminator");
  return out;
}

nn::ParamList HaftModel::all_arrays() const {
  nn::ParamList out = generator_arrays();
  const nn::ParamList d = discriminator_arrays();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

HaftModel HaftModel::clone() const {
  HaftModel copy(config_, 0);
  const nn::ParamList src = all_arrays();
  nn::ParamList dst = copy.all_arrays();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].var.mutable_value() = src[i].var.value();
  return copy;
}

nn::ParamList trainable(const nn::ParamList& arrays) {
  nn::ParamList out;
  for (const auto& a : arrays) {
    if (a.trainable) out.push_back(a);
  }
  return out;
}

}  // namespace haft
