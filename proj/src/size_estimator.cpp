#include "haft/size_estimator.hpp"

#include <cmath>

#include "haft/errors.hpp"

namespace haft {
namespace {

nn::Var single_map(const FeatureMap& fm) {
  const nn::Shape& s = fm.values.shape();
  if (s.size() != 4 || s[0] != 1) throw ShapeError("pool_region expects a single-item feature map");
  return fm.values;
}

nn::Var box_var(const BoundingBox& b) { return nn::Var(nn::Tensor({4}, {b.x, b.y, b.w, b.h})); }

double predicted(const IouHeadParams& params, const PooledFeature& tpl, const FeatureMap& fm, const BoundingBox& b) {
  return predict_iou(params, tpl, pool_region(fm, b, params.pool_size())).item();
}

}  // namespace

IouHeadParams::IouHeadParams(int channels, int pool_size, Rng& rng, int hidden)
    : channels_(channels),
      pool_size_(pool_size),
      modulation_(channels * pool_size * pool_size, channels * pool_size * pool_size, rng, 0.5),
      hidden_(channels * pool_size * pool_size, hidden, rng),
      score_(hidden, 1, rng, 0.5) {}

void IouHeadParams::collect(nn::ParamList& out, const std::string& prefix) const {
  modulation_.collect(out, prefix + ".modulation");
  hidden_.collect(out, prefix + ".hidden");
  score_.collect(out, prefix + ".score");
}

PooledFeature pool_region(const FeatureMap& fm, const BoundingBox& box, int pool_size, int samples_per_bin) {
  return pool_region(fm, box_var(box), pool_size, samples_per_bin);
}

PooledFeature pool_region(const FeatureMap& fm, const nn::Var& box, int pool_size, int samples_per_bin) {
  const nn::Var map = single_map(fm);
  const nn::Tensor& b = box.value();
  if (b.size() != 4) throw ShapeError("box must have 4 elements");
  if (!(b[2] > 0.0 && b[3] > 0.0)) throw ShapeError("pool_region: box width and height must be positive");
  nn::SamplingGrid grid{pool_size, fm.geometry.stride, fm.geometry.offset, samples_per_bin};
  PooledFeature out{nn::roi_bilinear_pool(map, box, grid), true};
  // A sample contributes when it lies strictly within one cell of the map.
  for (int i = 0; i < pool_size && out.outside; ++i) {
    const double cy = fm.geometry.to_cell(b[1] + (i + 0.5) / pool_size * b[3]);
    for (int j = 0; j < pool_size; ++j) {
      const double cx = fm.geometry.to_cell(b[0] + (j + 0.5) / pool_size * b[2]);
      if (cy > -1.0 && cy < fm.height() && cx > -1.0 && cx < fm.width()) {
        out.outside = false;
        break;
      }
    }
  }
  return out;
}

nn::Var predict_iou(const IouHeadParams& params, const PooledFeature& template_pool,
                    const PooledFeature& candidate_pool) {
  return predict_iou(params, template_pool, std::vector<PooledFeature>{candidate_pool});
}

nn::Var predict_iou(const IouHeadParams& params, const PooledFeature& template_pool,
                    const std::vector<PooledFeature>& candidate_pools) {
  const int d = params.dim();
  if (candidate_pools.empty()) throw ShapeError("predict_iou: no candidates");
  if (template_pool.values.value().size() != static_cast<std::size_t>(d)) {
    throw ShapeError("predict_iou: template pool has " + std::to_string(template_pool.values.value().size()) +
                     " values, head expects " + std::to_string(d));
  }
  std::vector<nn::Var> rows;
  rows.reserve(candidate_pools.size());
  for (const PooledFeature& p : candidate_pools) {
    if (p.values.shape() != template_pool.values.shape()) throw ShapeError("predict_iou: pool shapes differ");
    rows.push_back(nn::reshape(p.values, {1, d}));
  }
  const int n = static_cast<int>(rows.size());
  const nn::Var m = params.modulation()(nn::reshape(template_pool.values, {1, d}));
  const nn::Var modulation = n == 1 ? m : nn::gather(m, std::vector<int>(static_cast<std::size_t>(n), 0));
  const nn::Var candidates = n == 1 ? rows.front() : nn::concat(rows, 0);
  return nn::reshape(params.score()(nn::relu(params.hidden()(modulation * candidates))), {n});
}

std::vector<BoundingBox> sample_candidates(const BoundingBox& gt, const SizeLossConfig& config, Rng& rng) {
  if (config.n_candidates < 1) throw ConfigError("size loss needs at least one candidate");
  if (!gt.valid()) throw DataError("invalid ground-truth box " + to_string(gt));
  std::vector<BoundingBox> out;
  const long budget = 100L * config.n_candidates;
  // Candidates cycle through fine-to-coarse jitter scales so near-gt boxes are well covered.
  static constexpr double kScaleFractions[] = {1.0 / 6.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (long draw = 0; draw < budget && static_cast<int>(out.size()) < config.n_candidates; ++draw) {
    const double sigma = config.jitter_sigma * kScaleFractions[out.size() % 4];
    const double cx = gt.center_x() + gaussian(rng, sigma * gt.w);
    const double cy = gt.center_y() + gaussian(rng, sigma * gt.h);
    const double w = gt.w * std::exp(gaussian(rng, sigma));
    const double h = gt.h * std::exp(gaussian(rng, sigma));
    if (w <= 1.0 || h <= 1.0) continue;
    const BoundingBox b = BoundingBox::from_center(cx, cy, w, h);
    if (box_iou(b, gt) >= config.min_iou) out.push_back(b);
  }
  if (out.empty()) throw DataError("no size-loss candidate with IoU >= " + std::to_string(config.min_iou));
  return out;
}

nn::Var size_regression_loss(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                             const std::vector<BoundingBox>& candidates, const BoundingBox& gt) {
  if (candidates.empty()) throw ShapeError("size loss: no candidates");
  std::vector<PooledFeature> pools;
  nn::Tensor target({static_cast<int>(candidates.size())});
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    pools.push_back(pool_region(fm, candidates[i], params.pool_size()));
    target[i] = box_iou(candidates[i], gt);
  }
  const nn::Var diff = predict_iou(params, template_pool, pools) - nn::Var(target);
  return nn::affine(nn::sum_squares(diff), 1.0 / static_cast<double>(candidates.size()));
}

nn::Var size_loss(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                  const BoundingBox& gt, const SizeLossConfig& config, Rng& rng) {
  return size_regression_loss(params, template_pool, fm, sample_candidates(gt, config, rng), gt);
}

RefineResult refine_box(const IouHeadParams& params, const PooledFeature& template_pool, const FeatureMap& fm,
                        const BoundingBox& box0, const RefineConfig& config) {
  if (config.n_steps < 1) throw ConfigError("refine_box needs at least one step");
  const FeatureMap features = fm.detached();
  const PooledFeature tpl{template_pool.values.detach(), template_pool.outside};

  RefineResult result{box0, predicted(params, tpl, features, box0), {}};
  result.trajectory.push_back(result.predicted_iou);
  if (!std::isfinite(result.predicted_iou)) return {box0, result.predicted_iou, result.trajectory};

  for (int step = 0; step < config.n_steps; ++step) {
    const BoundingBox& b = result.box;
    const nn::Var box = nn::parameter(nn::Tensor({4}, {b.x, b.y, b.w, b.h}));
    predict_iou(params, tpl, pool_region(features, box, params.pool_size())).backward();
    const nn::Tensor& g = box.grad();
    bool finite = true;
    for (double v : g.values()) finite = finite && std::isfinite(v);
    if (!finite) return {box0, result.trajectory.front(), {result.trajectory.front()}};
    if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0 && g[3] == 0.0) break;

    const double scale[4] = {b.w * b.w, b.h * b.h, b.w * b.w, b.h * b.h};
    double length = config.step;
    bool accepted = false;
    for (int halving = 0; halving <= config.max_halvings && !accepted; ++halving, length *= 0.5) {
      BoundingBox proposal{b.x + length * scale[0] * g[0], b.y + length * scale[1] * g[1],
                           std::max(config.min_size, b.w + length * scale[2] * g[2]),
                           std::max(config.min_size, b.h + length * scale[3] * g[3])};
      const double value = predicted(params, tpl, features, proposal);
      if (std::isfinite(value) && value >= result.predicted_iou) {
        result.box = proposal;
        result.predicted_iou = value;
        result.trajectory.push_back(value);
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return result;
}

}  // namespace haft
