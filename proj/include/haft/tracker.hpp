#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "haft/dataset.hpp"
#include "haft/model.hpp"

namespace haft {

struct TrackConfig {
  double lambda_fuse = 0.2;
  /// false: localize on the real feature alone and never run the predictor.
  bool use_predictor = true;
  double update_threshold = 0.25;
  int init_filter_iters = 10;
  int update_filter_iters = 2;
  int update_interval = 10;  // frames between forced filter updates
  int n_candidates = 10;     // refinement starts, including the unjittered one
  int top_k = 3;
  double candidate_jitter = 0.1;
  /// Fraction of the refined size change applied per frame (1: take the refined size).
  double size_rate = 1.0;
  /// Take the refined box center instead of the response peak.
  bool refine_center = true;
  RefineConfig refine;
  std::uint64_t seed = 1;

  void validate() const;
};

/// x = lambda * eta + (1 - lambda) * beta, elementwise.
FeatureMap fuse_features(const FeatureMap& eta, const FeatureMap& beta, double lambda_fuse);

struct TrackerState {
  PredictorState predictor_state;
  std::optional<FeatureMap> eta_pending;  // forecast for the upcoming frame
  Filter filter;
  SampleMemory memory;
  PooledFeature template_pool;
  BoundingBox current_box;  // frame coordinates
  int frame_index = 0;
  std::vector<double> confidence_history;
  Rng rng;
};

struct StepOutput {
  BoundingBox box;
  double confidence = 0.0;
};

class Tracker {
 public:
  Tracker(const HaftModel& model, const TrackConfig& config);

  /// Builds the 15 augmented first-frame samples, learns the initial filter and
  /// primes the predictor. Throws ConfigError for an invalid box.
  TrackerState init(const Image& first_frame, const BoundingBox& init_box) const;
  StepOutput step(TrackerState& state, const Image& frame) const;

  const TrackConfig& config() const noexcept { return config_; }

  /// The augmented first-frame patches, identity first.
  std::vector<SamplePatch> augment(const Image& frame, const BoundingBox& box, Rng& rng) const;

 private:
  BoundingBox refine(const TrackerState& state, const FeatureMap& x, const BoundingBox& start, Rng& rng) const;
  LabelMap label_at(double cell_y, double cell_x, int h, int w) const;

  const HaftModel& model_;
  TrackConfig config_;
};

struct TrackResult {
  std::vector<BoundingBox> boxes;
  std::vector<double> confidences;
};

/// One output per frame; frame 0 echoes the ground-truth box with confidence 1.
TrackResult track_sequence(const HaftModel& model, const SequenceSource& source, std::size_t seq,
                           const TrackConfig& config);

void write_tracking_csv(const std::filesystem::path& path, const TrackResult& result);
TrackResult read_tracking_csv(const std::filesystem::path& path);

}  // namespace haft
