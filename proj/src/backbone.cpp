#include "haft/backbone.hpp"

#include "haft/errors.hpp"

namespace haft {

BackboneParams::BackboneParams(const BackboneConfig& config, Rng& rng) : config_(config) {
  int in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    convs_[i] = nn::Conv2d(in, config.channels[i], 3, config.strides[i], 1, rng, 1.0, false);
    norms_[i] = nn::BatchNorm2d(config.channels[i]);
    in = config.channels[i];
  }
}

nn::Var BackboneParams::forward(const nn::Var& input, bool training) const {
  nn::Var x = input;
  for (std::size_t i = 0; i < 4; ++i) x = nn::relu(norms_[i](convs_[i](x), training));
  return x;
}

FeatureGeometry BackboneParams::geometry() const {
  // With 3x3 kernels and unit padding, output cell j is centered on input pixel stride * j.
  return {static_cast<double>(config_.total_stride()), 0.5};
}

void BackboneParams::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < 4; ++i) {
    convs_[i].collect(out, prefix + ".conv" + std::to_string(i + 1));
    norms_[i].collect(out, prefix + ".bn" + std::to_string(i + 1));
  }
}

nn::Tensor patches_to_tensor(const std::vector<const Image*>& patches) {
  if (patches.empty()) throw ShapeError("no patches to convert");
  const int h = patches.front()->height;
  const int w = patches.front()->width;
  nn::Tensor t({static_cast<int>(patches.size()), 3, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < patches.size(); ++n) {
    const Image& img = *patches[n];
    if (img.height != h || img.width != w) throw ShapeError("patches in a batch must share their size");
    double* dst = t.data() + n * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<double>(img.pixels[i * 3 + c]) - 0.5;
    }
  }
  return t;
}

FeatureMap extract_features(const BackboneParams& params, const std::vector<const Image*>& patches, bool training) {
  const int stride = params.config().total_stride();
  for (const Image* p : patches) {
    if (p->height % stride != 0 || p->width % stride != 0) {
      throw ShapeError("patch size " + std::to_string(p->width) + "x" + std::to_string(p->height) +
                       " is not divisible by the backbone stride " + std::to_string(stride));
    }
  }
  return {params.forward(nn::Var(patches_to_tensor(patches)), training), params.geometry()};
}

FeatureMap extract_features(const BackboneParams& params, const SamplePatch& patch, bool training) {
  return extract_features(params, std::vector<const Image*>{&patch.pixels}, training);
}

}  // namespace haft
