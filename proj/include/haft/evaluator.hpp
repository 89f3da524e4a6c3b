#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "haft/dataset.hpp"
#include "haft/tracker.hpp"

namespace haft {

inline double iou(const BoundingBox& a, const BoundingBox& b) { return box_iou(a, b); }

/// 0.00, 0.05, ..., 1.00
std::vector<double> success_thresholds();

struct SuccessCurve {
  std::vector<double> curve;  // fraction of frames with IoU >= threshold
  double auc = 0.0;           // mean of the curve
};

/// Throws DataError on an empty list. Callers pass frames 1.. (the init frame is given).
SuccessCurve success_curve(const std::vector<double>& ious);

/// Fraction of errors <= tau.
double precision_at(const std::vector<double>& center_errors, double tau = 20.0);

/// Number of frames where IoU drops below 0.1 after being at or above it; tracking
/// starts in the "on target" state.
int failure_count(const std::vector<double>& ious);

struct OcclusionSegment {
  int start = 0;  // first frame with visibility < 0.5
  int end = 0;    // last such frame, inclusive
  double mean_iou = 0.0;
  double recovery_iou = 0.0;  // over up to 5 frames after `end`; NaN when none remain
  int recovery_frames = 0;
};

struct OcclusionReport {
  std::vector<OcclusionSegment> segments;
  double mean_iou = 0.0;      // pooled over all segment frames; NaN without segments
  double recovery_iou = 0.0;  // pooled over all recovery frames
  double combined_iou = 0.0;  // pooled over segment and recovery frames
  int failures = 0;
};

inline constexpr int kRecoveryWindow = 5;

/// `ious` is indexed by frame (frame 0 included) and must match `visibility` in length.
OcclusionReport occlusion_report(const std::vector<double>& visibility, const std::vector<double>& ious);

struct EvalResult {
  std::string sequence;
  std::vector<double> ious;           // per frame, frame 0 included
  std::vector<double> center_errors;  // px
  SuccessCurve success;
  double precision20 = 0.0;
  int failures = 0;
  std::optional<OcclusionReport> occlusion;
};

EvalResult evaluate_sequence(const std::string& name, const std::vector<BoundingBox>& ground_truth,
                             const std::vector<BoundingBox>& predicted,
                             const std::optional<std::vector<double>>& visibility);

double mean_auc(const std::vector<EvalResult>& results);

/// Tracks and evaluates every sequence of `source`; `jobs` > 1 tracks sequences in
/// parallel on private model copies. Results are in sequence order.
std::vector<EvalResult> evaluate_tracker(const HaftModel& model, const SequenceSource& source,
                                         const TrackConfig& config, int jobs = 1,
                                         std::vector<TrackResult>* tracks = nullptr);

struct LambdaRow {
  double lambda = 0.0;
  double mean_auc = 0.0;
};

std::vector<LambdaRow> run_lambda_sweep(const HaftModel& model, const SequenceSource& source,
                                        const std::vector<double>& lambdas, const TrackConfig& base, int jobs = 1);

struct AblationRow {
  std::string name;  // none, gan_only, l2_only, both
  double mean_auc = 0.0;
  double generator_loss_variance = 0.0;  // NaN when not recorded
};

void write_lambda_sweep_csv(const std::filesystem::path& path, const std::vector<LambdaRow>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// summary.csv, one CSV per sequence, success.png and precision.png (and
/// lambda_sweep.png when rows are given). Throws DataError on an empty result set.
void emit_report(const std::vector<EvalResult>& results, const std::filesystem::path& out_dir,
                 const std::vector<LambdaRow>& lambda_rows = {});

}  // namespace haft
