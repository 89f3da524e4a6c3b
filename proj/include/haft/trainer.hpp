#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "haft/checkpoint.hpp"
#include "haft/dataset.hpp"
#include "haft/model.hpp"
#include "haft/optim.hpp"

namespace haft {

struct LossWeights {
  double w_V = 0.1;
  double w_R = 1.0;
  double w_L = 1.0;
  double w_S = 1.0;
  double lambda_fuse = 0.2;

  void validate() const;
};

struct TrainConfig {
  int clip_length = 16;
  int batch_size = 4;
  int iterations_per_epoch = 200;
  int epochs = 10;
  double lr = 1e-3;
  double decay = 0.2;
  int decay_period = 4;  // epochs
  std::uint64_t seed = 1;
  MaskConfig mask;
  JitterConfig jitter{0.1, 0.15};
  LossWeights weights;
  double grad_clip = 10.0;
  SizeLossConfig size;
  int filter_iters = 10;
  int max_consecutive_skips = 10;

  std::int64_t total_iterations() const { return static_cast<std::int64_t>(epochs) * iterations_per_epoch; }
  void validate() const;
};

/// Learning rate during 1-based `epoch`: lr * decay^floor((epoch - 1) / decay_period).
double learning_rate(const TrainConfig& config, int epoch);

/// clip_length + 1 consecutive frames. Frame 0 is the template crop around its own
/// box; frame k >= 1 is cropped around the box of frame k - 1 with jitter. `targets`
/// are never masked; `inputs` equal `targets` except for random masks on frames >= 1.
struct TrainingClip {
  std::size_t sequence = 0;
  int start = 0;
  std::vector<SamplePatch> targets;
  std::vector<SamplePatch> inputs;
  std::vector<OcclusionMask> masks;

  int length() const { return static_cast<int>(targets.size()) - 1; }
};

TrainingClip sample_clip(const SequenceSource& source, const TrainConfig& config, const CropConfig& crop, Rng& rng);

struct LossComponents {
  double l_V = 0.0;
  double l_R = 0.0;
  double l_L = 0.0;
  double l_S = 0.0;
};

struct LossReport {
  std::int64_t iteration = 0;
  double lr = 0.0;
  LossComponents components;
  double total = 0.0;
  double l_D = 0.0;
  bool skipped = false;
};

/// Weighted sum; throws DivergenceError naming the first non-finite component.
std::pair<double, LossReport> total_loss(const LossComponents& components, const LossWeights& weights);

/// Owns the model and both optimizers.
class Trainer {
 public:
  Trainer(HaftModel model, const TrainConfig& config);

  /// One discriminator update followed by one generator update. Non-finite losses
  /// skip the step; too many consecutive skips throw DivergenceError.
  LossReport train_step(const std::vector<TrainingClip>& batch, double lr);

  const HaftModel& model() const noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::int64_t iteration() const noexcept { return iteration_; }
  std::int64_t skipped_steps() const noexcept { return skipped_total_; }

  /// Generator arrays are deployable; discriminator and optimizer state are train-only.
  Checkpoint checkpoint(const std::map<std::string, std::string>& config_snapshot) const;
  void resume(const Checkpoint& checkpoint);

 private:
  HaftModel model_;
  TrainConfig config_;
  Adam generator_opt_;
  Adam discriminator_opt_;
  std::int64_t iteration_ = 0;
  int consecutive_skips_ = 0;
  std::int64_t skipped_total_ = 0;
};

/// The batch used at `iteration`; depends only on (seed, iteration).
std::vector<TrainingClip> sample_batch(const SequenceSource& source, const TrainConfig& config, const CropConfig& crop,
                                       std::int64_t iteration);

struct TrainOptions {
  std::filesystem::path out_dir;  // checkpoint/ and train_log.csv; empty disables output
  std::optional<std::filesystem::path> resume_from;
  std::map<std::string, std::string> config_snapshot;
  /// Stop after this many iterations in this call (resume continues the schedule).
  std::optional<std::int64_t> max_iterations;
  std::function<void(const LossReport&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossReport> log;
};

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const SequenceSource& source,
                  const TrainOptions& options = {});

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LossReport& report);
/// Parses a log written by `train`. Throws DataError on a malformed file.
std::vector<LossReport> read_train_log(const std::filesystem::path& path);

}  // namespace haft
