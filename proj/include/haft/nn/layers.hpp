#pragma once

#include <string>
#include <vector>

#include "haft/nn/autograd.hpp"
#include "haft/rng.hpp"

namespace haft::nn {

/// A named array owned by a model. Buffers (running statistics) are not trainable.
struct NamedArray {
  std::string name;
  Var var;
  bool trainable = true;
};
using ParamList = std::vector<NamedArray>;

struct Conv2d {
  Var weight;  // [out, in, k, k]
  Var bias;    // [out], undefined when the layer feeds a normalization
  kernels::ConvSpec spec;

  Conv2d() = default;
  /// He-normal initialization (gain 2 / fan_in) scaled by `gain`.
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng, double gain = 1.0,
         bool with_bias = true);

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, spec); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct BatchNorm2d {
  Var gamma;
  Var beta;
  Var running_mean;
  Var running_var;
  BatchNormOptions options;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  /// Training mode normalizes with batch statistics and updates the running estimates.
  Var operator()(const Var& x, bool training) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Linear {
  Var weight;  // [out, in]
  Var bias;    // [out]

  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng, double gain = 1.0);

  Var operator()(const Var& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace haft::nn
