#pragma once

#include "haft/nn/tensor.hpp"

namespace haft::nn::kernels {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
};

int conv_output_size(int input, int kernel, const ConvSpec& spec);

/// y[n,o] = sum_c w[o,c] (*) x[n,c] + b[o]; x is [N,Ci,H,W], w is [Co,Ci,k,k].
/// `bias` may be empty.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvSpec& spec);

/// Accumulates dL/dw into `grad_w` (and dL/db into `grad_b` when non-empty).
void conv2d_backward_weight(const Tensor& x, const Tensor& grad_y, const ConvSpec& spec, int kernel,
                            Tensor& grad_w, Tensor* grad_b);

/// Accumulates dL/dx into `grad_x`.
void conv2d_backward_input(const Tensor& w, const Tensor& grad_y, const ConvSpec& spec, Tensor& grad_x);

}  // namespace haft::nn::kernels
