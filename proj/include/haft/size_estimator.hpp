#pragma once

#include <vector>

#include "haft/feature_map.hpp"
#include "haft/geometry.hpp"
#include "haft/nn/layers.hpp"

namespace haft {

/// Bilinear K x K region samples [C,K,K]; `outside` marks a box that misses the map entirely.
struct PooledFeature {
  nn::Var values;
  bool outside = false;
};

/// Template-modulated IoU predictor: m = modulation(template),
/// iou = score(relu(hidden(m (x) candidate))).
class IouHeadParams {
 public:
  IouHeadParams() = default;
  IouHeadParams(int channels, int pool_size, Rng& rng, int hidden = 64);

  int channels() const noexcept { return channels_; }
  int pool_size() const noexcept { return pool_size_; }
  int dim() const noexcept { return channels_ * pool_size_ * pool_size_; }
  const nn::Linear& modulation() const noexcept { return modulation_; }
  const nn::Linear& hidden() const noexcept { return hidden_; }
  const nn::Linear& score() const noexcept { return score_; }
  void collect(nn::ParamList& out, const std::string& prefix) const;

 private:
  int channels_ = 0;
  int pool_size_ = 3;
  nn::Linear modulation_;
  nn::Linear hidden_;
  nn::Linear score_;
};

inline constexpr int kPoolSamplesPerBin = 2;

/// `fm` must hold a single item. `box` is in patch pixels. Each of the K x K bins
/// averages samples_per_bin^2 bilinear samples.
PooledFeature pool_region(const FeatureMap& fm, const BoundingBox& box, int pool_size = 3,
                          int samples_per_bin = kPoolSamplesPerBin);
/// Differentiable in the box: `box` is a 4-element Var (x, y, w, h).
PooledFeature pool_region(const FeatureMap& fm, const nn::Var& box, int pool_size = 3,
                          int samples_per_bin = kPoolSamplesPerBin);

/// Predicted IoU, shape [1].
nn::Var predict_iou(const IouHeadParams& params, const PooledFeature& template_pool,
                    const PooledFeature& candidate_pool);
/// Predicted IoUs [n] for several candidate pools sharing one template.
nn::Var predict_iou(const IouHeadParams& params, const PooledFeature& template_pool,
                    const std::vector<PooledFeature>& candidate_pools);

struct SizeLossConfig {
  int n_candidates = 8;
  double jitter_sigma = 0.3;  // relative to box size
  double min_iou = 0.1;
};

/// Jittered boxes around gt with IoU >= min_iou. Center offsets are Gaussian, sizes
/// log-normal; the sigma cycles over 1/6, 1/3, 2/3 and 1 of jitter_sigma. Throws DataError when none
/// is found within 100 * n draws.
std::vector<BoundingBox> sample_candidates(const BoundingBox& gt, const SizeLossConfig& config, Rng& rng);

/// MSE between predicted IoU and analytic IoU with gt over the given candidates.
nn::Var size_regression_loss(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                             const std::vector<BoundingBox>& candidates, const BoundingBox& gt);
nn::Var size_loss(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                  const BoundingBox& gt, const SizeLossConfig& config, Rng& rng);

struct RefineConfig {
  int n_steps = 5;
  double step = 0.1;
  int max_halvings = 6;
  double min_size = 4.0;
};

struct RefineResult {
  BoundingBox box;
  double predicted_iou = 0.0;
  /// Predicted IoU of the start box followed by every accepted step.
  std::vector<double> trajectory;
};

/// Gradient ascent on the predicted IoU with per-coordinate step 0.1 * size^2 * gradient
/// and backtracking halving. Features are treated as constants.
RefineResult refine_box(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                        const BoundingBox& box0, const RefineConfig& config = {});

}  // namespace haft
