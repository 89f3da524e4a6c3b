#include "haft/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace {

constexpr double kMinBoxSide = 4.0;

bool finite(const nn::Tensor& t) { return t.all_finite(); }

BoundingBox clamp_to_frame(BoundingBox box, const Image& frame) {
  const double w = std::clamp(box.w, kMinBoxSide, static_cast<double>(frame.width));
  const double h = std::clamp(box.h, kMinBoxSide, static_cast<double>(frame.height));
  const double cx = std::clamp(box.center_x(), 0.0, static_cast<double>(frame.width));
  const double cy = std::clamp(box.center_y(), 0.0, static_cast<double>(frame.height));
  return BoundingBox::from_center(cx, cy, w, h);
}

}  // namespace

void TrackConfig::validate() const {
  if (!(lambda_fuse >= 0.0 && lambda_fuse <= 1.0)) throw ConfigError("track.lambda must lie in [0, 1]");
  if (init_filter_iters < 1 || update_filter_iters < 1) throw ConfigError("filter iterations must be positive");
  if (update_interval < 1) throw ConfigError("track.update_interval must be positive");
  if (n_candidates < 1 || top_k < 1 || top_k > n_candidates) {
    throw ConfigError("track.top_k must lie in [1, track.n_candidates]");
  }
  if (refine.n_steps < 1) throw ConfigError("track.refine_steps must be positive");
  if (!(size_rate >= 0.0 && size_rate <= 1.0)) throw ConfigError("track.size_rate must lie in [0, 1]");
}

FeatureMap fuse_features(const FeatureMap& eta, const FeatureMap& beta, double lambda_fuse) {
  if (eta.values.shape() != beta.values.shape()) {
    throw ShapeError("fuse_features: " + nn::shape_string(eta.values.shape()) + " vs " +
                     nn::shape_string(beta.values.shape()));
  }
  if (!(lambda_fuse >= 0.0 && lambda_fuse <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  return {nn::affine(eta.values, lambda_fuse) + nn::affine(beta.values, 1.0 - lambda_fuse), beta.geometry};
}

Tracker::Tracker(const HaftModel& model, const TrackConfig& config) : model_(model), config_(config) {
  config_.validate();
}

LabelMap Tracker::label_at(double cell_y, double cell_x, int h, int w) const {
  return gaussian_label(cell_y, cell_x, model_.config().localizer.sigma, h, w);
}

std::vector<SamplePatch> Tracker::augment(const Image& frame, const BoundingBox& box, Rng& rng) const {
  const CropConfig& crop = model_.config().crop;
  const SamplePatch identity = crop_search_region(frame, box, {}, crop, rng);
  std::vector<SamplePatch> out{identity};

  // Crops around a shifted or rescaled reference; the target stays where it is.
  const double dx = 0.1 * box.w, dy = 0.1 * box.h;
  for (auto [sx, sy] : {std::pair{dx, 0.0}, {-dx, 0.0}, {0.0, dy}, {0.0, -dy}}) {
    const BoundingBox ref{box.x + sx, box.y + sy, box.w, box.h};
    out.push_back(crop_search_region(frame, ref, {}, crop, rng, box));
  }
  for (double s : {0.95, 1.05}) {
    const BoundingBox ref = BoundingBox::from_center(box.center_x(), box.center_y(), box.w * s, box.h * s);
    out.push_back(crop_search_region(frame, ref, {}, crop, rng, box));
  }

  SamplePatch flipped = identity;
  flipped.pixels = flip_horizontal(identity.pixels);
  const BoundingBox& t = identity.target_box_in_patch;
  flipped.target_box_in_patch = {identity.pixels.width - t.x - t.w, t.y, t.w, t.h};
  out.push_back(std::move(flipped));

  const std::array<double, 3> fill = identity.pixels.channel_mean();
  for (double degrees : {10.0, -10.0}) {
    SamplePatch rotated = identity;
    rotated.pixels = rotate(identity.pixels, degrees, fill);
    out.push_back(std::move(rotated));
  }
  for (double sigma : {1.0, 2.0}) {
    SamplePatch blurred = identity;
    blurred.pixels = gaussian_blur(identity.pixels, sigma);
    out.push_back(std::move(blurred));
  }
  for (int i = 0; i < 3; ++i) out.push_back(crop_search_region(frame, box, {0.05, 0.1}, crop, rng, box));
  return out;
}

TrackerState Tracker::init(const Image& first_frame, const BoundingBox& init_box) const {
  if (!init_box.valid()) throw ConfigError("invalid initial box " + to_string(init_box));
  nn::NoGradGuard no_grad;
  const LocalizerConfig& loc = model_.config().localizer;
  TrackerState state;
  state.rng = make_rng(config_.seed, "track.init", 0);
  state.memory = SampleMemory(loc.memory_capacity, loc.memory_decay);
  state.current_box = init_box;

  const std::vector<SamplePatch> patches = augment(first_frame, init_box, state.rng);
  std::vector<const Image*> images;
  for (const SamplePatch& p : patches) images.push_back(&p.pixels);
  const FeatureMap features = extract_features(model_.backbone, images, false);
  const FeatureGeometry& g = features.geometry;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const BoundingBox& t = patches[i].target_box_in_patch;
    const LabelMap z = label_at(g.to_cell(t.center_y()), g.to_cell(t.center_x()), features.height(), features.width());
    state.memory.insert(features.item(static_cast<int>(i)).values.value(), z,
                        region_weight(z, loc.sigma, loc.region_factor));
  }
  state.filter = learn_filter(state.memory, Filter::zeros(features.channels(), loc.filter_size),
                              config_.init_filter_iters, loc.reg_lambda);

  const FeatureMap alpha1 = features.item(0);
  state.template_pool = pool_region(alpha1, patches.front().target_box_in_patch, model_.config().pool_size);
  if (config_.use_predictor) {
    state.predictor_state = init_state(alpha1);
    auto [next, eta] = predict_next(model_.predictor, state.predictor_state, alpha1);
    state.predictor_state = std::move(next);
    state.eta_pending = std::move(eta);
  }
  state.rng = make_rng(config_.seed, "track.step", 0);
  state.confidence_history.push_back(1.0);
  return state;
}

BoundingBox Tracker::refine(const TrackerState& state, const FeatureMap& x, const BoundingBox& start, Rng& rng) const {
  std::vector<RefineResult> results;
  for (int i = 0; i < config_.n_candidates; ++i) {
    BoundingBox box0 = start;
    if (i > 0) {
      const double j = config_.candidate_jitter;
      box0 = BoundingBox::from_center(start.center_x() + gaussian(rng, j) * start.w,
                                      start.center_y() + gaussian(rng, j) * start.h,
                                      start.w * std::exp(gaussian(rng, j)), start.h * std::exp(gaussian(rng, j)));
    }
    results.push_back(refine_box(model_.iou_head, state.template_pool, x, box0, config_.refine));
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const RefineResult& a, const RefineResult& b) { return a.predicted_iou > b.predicted_iou; });
  double cx = 0, cy = 0, w = 0, h = 0;
  for (int i = 0; i < config_.top_k; ++i) {
    const BoundingBox& b = results[i].box;
    cx += b.center_x();
    cy += b.center_y();
    w += b.w;
    h += b.h;
  }
  const double k = config_.top_k;
  return BoundingBox::from_center(cx / k, cy / k, w / k, h / k);
}

StepOutput Tracker::step(TrackerState& state, const Image& frame) const {
  const LocalizerConfig& loc = model_.config().localizer;
  ++state.frame_index;
  const SamplePatch patch = crop_search_region(frame, state.current_box, {}, model_.config().crop, state.rng);

  FeatureMap beta;
  {
    nn::NoGradGuard no_grad;
    beta = extract_features(model_.backbone, patch, false);
  }
  if (!finite(beta.values.value())) {
    state.confidence_history.push_back(0.0);
    return {state.current_box, 0.0};
  }
  FeatureMap x = beta;
  if (config_.use_predictor) {
    nn::NoGradGuard no_grad;
    x = fuse_features(*state.eta_pending, beta, config_.lambda_fuse);
  }

  const nn::Tensor response = correlate(x.values.value(), state.filter);
  const Localization peak = localize(response, x.geometry);

  const BoundingBox& previous = patch.target_box_in_patch;
  const BoundingBox start = BoundingBox::from_center(peak.x, peak.y, previous.w, previous.h);
  const BoundingBox refined = refine(state, x.detached(), start, state.rng);
  const double r = config_.size_rate;
  const BoundingBox damped = BoundingBox::from_center(
      config_.refine_center ? refined.center_x() : peak.x, config_.refine_center ? refined.center_y() : peak.y,
      previous.w + r * (refined.w - previous.w), previous.h + r * (refined.h - previous.h));
  state.current_box = clamp_to_frame(patch.crop_transform.to_frame(damped), frame);

  {
    nn::NoGradGuard no_grad;
    bool inserted = false;
    if (peak.confidence > config_.update_threshold) {
      const BoundingBox in_patch = patch.crop_transform.to_patch(state.current_box);
      const LabelMap z = label_at(x.geometry.to_cell(in_patch.center_y()), x.geometry.to_cell(in_patch.center_x()),
                                  x.height(), x.width());
      state.memory.insert(x.values.value(), z, region_weight(z, loc.sigma, loc.region_factor));
      inserted = true;
    }
    if (inserted || state.frame_index % config_.update_interval == 0) {
      state.filter = learn_filter(state.memory, state.filter, config_.update_filter_iters, loc.reg_lambda);
    }
    if (config_.use_predictor) {
      auto [next, eta] = predict_next(model_.predictor, state.predictor_state, beta);
      state.predictor_state = std::move(next);
      state.eta_pending = std::move(eta);
    }
  }
  state.confidence_history.push_back(peak.confidence);
  return {state.current_box, peak.confidence};
}

TrackResult track_sequence(const HaftModel& model, const SequenceSource& source, std::size_t seq,
                           const TrackConfig& config) {
  const std::vector<BoundingBox>& gt = source.boxes(seq);
  if (gt.empty()) throw DataError("sequence " + source.name(seq) + " is empty");
  const Tracker tracker(model, config);
  TrackResult result;
  const Image first = source.frame(seq, 0);
  TrackerState state = tracker.init(first, gt.front());
  result.boxes.push_back(gt.front());
  result.confidences.push_back(1.0);
  for (int t = 1; t < static_cast<int>(gt.size()); ++t) {
    const StepOutput out = tracker.step(state, source.frame(seq, t));
    result.boxes.push_back(out.box);
    result.confidences.push_back(out.confidence);
  }
  return result;
}

void write_tracking_csv(const std::filesystem::path& path, const TrackResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "frame_index,x,y,w,h,confidence\n" << std::setprecision(10);
  for (std::size_t i = 0; i < result.boxes.size(); ++i) {
    const BoundingBox& b = result.boxes[i];
    out << i << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ',' << result.confidences[i] << '\n';
  }
}

TrackResult read_tracking_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("frame_index", 0) != 0) throw DataError(path.string() + ": missing tracking CSV header");
  TrackResult result;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    int index = 0;
    BoundingBox b;
    double conf = 0.0;
    if (!(fields >> index >> b.x >> b.y >> b.w >> b.h >> conf) || index != row) {
      throw DataError(path.string() + ": malformed row " + std::to_string(row + 2));
    }
    result.boxes.push_back(b);
    result.confidences.push_back(conf);
    ++row;
  }
  return result;
}

}  // namespace haft
