#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "haft/nn/kernels.hpp"
#include "haft/nn/tensor.hpp"

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a graph node, in the manner of torch::Tensor:
// copying a Var aliases the same value and gradient. Operations record their
// inputs only while gradient recording is enabled and at least one input
// requires a gradient.

namespace haft::nn {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  /// Empty tensor until a backward pass reaches this node.
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  double item() const { return node_->value.item(); }

  /// Same value, cut from the graph.
  Var detach() const;

  /// Backpropagates from a single-element Var (seed 1), then releases the graph.
  void backward() const;
  void backward(const Tensor& seed) const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that accumulates gradients.
Var parameter(Tensor value);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise, shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// scale * x + shift
Var affine(const Var& x, double scale, double shift = 0.0);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
/// log(1 + exp(x)), evaluated stably.
Var softplus(const Var& x);
/// Gradient passes only where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);
Var sum_squares(const Var& x);

/// Concatenation along `axis`; all other dimensions must agree.
Var concat(const std::vector<Var>& parts, int axis);
/// Rows of `x` along axis 0, in the given order (repeats allowed).
Var gather(const Var& x, const std::vector<int>& indices);
Var reshape(const Var& x, Shape shape);

/// x: [N,Ci,H,W], w: [Co,Ci,k,k], bias: [Co] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, const kernels::ConvSpec& spec);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of [N,C,H,W]. In training mode batch statistics are
/// used and the running estimates are updated in place.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
               const BatchNormOptions& options);

/// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);
/// x: [N,D], w: [O,D], bias: [O] or undefined -> [N,O]
Var linear(const Var& x, const Var& w, const Var& bias);

struct SamplingGrid {
  int size = 3;          // K x K sample points
  double stride = 8.0;   // input pixels per feature cell
  double offset = 0.5;   // input-pixel coordinate of cell (0,0)
  int samples_per_bin = 1;  // each bin averages an s x s grid of points
};

/// Bilinear samples of a [1,C,H,W] (or [C,H,W]) map over the K x K bins of
/// `box` = (x, y, w, h) given in input-pixel coordinates; each bin averages
/// samples_per_bin^2 points spread evenly inside it. Samples outside the
/// map read zero. Differentiable in both the map and the box. Returns [C,K,K].
Var roi_bilinear_pool(const Var& feature, const Var& box, const SamplingGrid& grid);

}  // namespace haft::nn
