#pragma once

#include <cstdint>

#include "haft/nn/layers.hpp"

namespace haft {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive moment estimation over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParamList params, const AdamConfig& config = {});

  void zero_grad();
  /// Parameters without a gradient are left untouched.
  void step(double lr);

  std::int64_t steps() const noexcept { return steps_; }
  void set_steps(std::int64_t steps) noexcept { steps_ = steps; }
  const nn::ParamList& params() const noexcept { return params_; }
  /// First and second moment arrays, named "<param>.adam_m" / "<param>.adam_v".
  nn::ParamList state_arrays() const;

 private:
  nn::ParamList params_;
  AdamConfig config_;
  std::vector<nn::Var> m_;
  std::vector<nn::Var> v_;
  std::int64_t steps_ = 0;
};

/// Global L2 norm of all gradients before clipping; rescales them to `max_norm` when above it.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

}  // namespace haft
