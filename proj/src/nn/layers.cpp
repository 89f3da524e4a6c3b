#include "haft/nn/layers.hpp"

#include <cmath>

namespace haft::nn {
namespace {

Tensor he_normal(Shape shape, int fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng, double gain,
               bool with_bias)
    : weight(parameter(he_normal({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng, gain))),
      spec{stride, pad} {
  if (with_bias) bias = parameter(Tensor({out_channels}));
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(parameter(Tensor({channels}, 1.0))),
      beta(parameter(Tensor({channels}))),
      running_mean(Tensor({channels})),
      running_var(Tensor({channels}, 1.0)) {}

Var BatchNorm2d::operator()(const Var& x, bool training) const {
  Var mean_handle = running_mean;
  Var var_handle = running_var;
  BatchNormOptions opts = options;
  opts.training = training;
  return batch_norm(x, gamma, beta, mean_handle.mutable_value(), var_handle.mutable_value(), opts);
}

void BatchNorm2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", running_mean, false});
  out.push_back({prefix + ".running_var", running_var, false});
}

Linear::Linear(int in_features, int out_features, Rng& rng, double gain)
    : weight(parameter(he_normal({out_features, in_features}, in_features, rng, gain))),
      bias(parameter(Tensor({out_features}))) {}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, true});
}

}  // namespace haft::nn
