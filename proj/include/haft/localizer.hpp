#pragma once

#include <cstdint>
#include <vector>

#include "haft/feature_map.hpp"

namespace haft {

/// Gaussian target label on the feature grid; values is [h,w].
struct LabelMap {
  nn::Tensor values;
  double center_y = 0.0;  // rows, sub-cell
  double center_x = 0.0;  // columns, sub-cell
};

/// Correlation filter [C,k,k], k odd.
struct Filter {
  nn::Tensor values;

  static Filter zeros(int channels, int size) { return {nn::Tensor({channels, size, size})}; }
  int channels() const { return values.dim(0); }
  int size() const { return values.dim(1); }
};

struct LocalizerConfig {
  double sigma = 1.0;          // label width, cells
  double region_factor = 2.0;  // residual weight within 2 sigma of the center
  int filter_size = 5;
  int memory_capacity = 50;
  double memory_decay = 0.99;
  double reg_lambda = 0.01;
};

LabelMap gaussian_label(double center_y, double center_x, double sigma, int height, int width);

/// factor within 2 sigma of the label center, 1 elsewhere.
nn::Tensor region_weight(const LabelMap& label, double sigma, double factor);

/// Same-size cross-correlation of [C,h,w] (or [1,C,h,w]) features with the
/// kernel-centered filter, zero padded. Returns [h,w].
nn::Tensor correlate(const nn::Tensor& features, const Filter& filter);
/// Differentiable form for batched features [B,C,h,w] and filter [C,k,k]; returns [B,1,h,w].
nn::Var correlate(const nn::Var& features, const nn::Var& filter);

nn::Tensor localization_residual(const nn::Tensor& response, const nn::Tensor& label, const nn::Tensor& weight);

struct MemorySample {
  nn::Tensor features;  // [C,h,w]
  nn::Tensor label;     // [h,w]
  nn::Tensor weight;    // [h,w] region weight
  double sample_weight = 1.0;
  std::uint64_t inserted = 0;
};

/// Fixed-capacity training set for online filter learning. New samples enter with
/// weight 1 and existing weights decay by `decay` on every insertion; the oldest
/// sample is replaced once full.
class SampleMemory {
 public:
  explicit SampleMemory(int capacity = 50, double decay = 0.99);

  void insert(nn::Tensor features, const LabelMap& label, nn::Tensor weight);
  int size() const noexcept { return static_cast<int>(samples_.size()); }
  int capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<MemorySample>& samples() const noexcept { return samples_; }
  /// Sample weights normalized to sum 1, in storage order.
  std::vector<double> normalized_weights() const;

 private:
  int capacity_;
  double decay_;
  std::uint64_t counter_ = 0;
  std::vector<MemorySample> samples_;
};

/// Objective sum_s w_s ||W_s (x) (x_s * f - z_s)||^2 + reg_lambda ||f||^2.
double filter_objective(const SampleMemory& memory, const Filter& filter, double reg_lambda);

/// Steepest descent with exact line search on the quadratic filter objective.
/// `history`, when given, receives the objective before the first and after every
/// iteration. Returns f0 unchanged when the initial gradient vanishes while the
/// objective is nonzero.
Filter learn_filter(const SampleMemory& memory, const Filter& f0, int n_iters, double reg_lambda,
                    std::vector<double>* history = nullptr);

/// Mean over maps of the mean squared weighted residual. Differentiable in the responses.
nn::Var localization_loss(const std::vector<nn::Var>& responses, const std::vector<nn::Tensor>& labels,
                          const std::vector<nn::Tensor>& region_weights);

struct Localization {
  double x = 0.0;  // patch pixels
  double y = 0.0;
  double confidence = 0.0;
  double cell_x = 0.0;
  double cell_y = 0.0;
};

/// Peak of an [h,w] response, refined by a quadratic fit over the 3x3 neighborhood.
Localization localize(const nn::Tensor& response, const FeatureGeometry& geometry);

}  // namespace haft
