#include "haft/evaluator.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "haft/errors.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFailureIou = 0.1;

double mean_or_nan(double sum, int count) { return count > 0 ? sum / count : kNaN; }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(8) << v;
  return s.str();
}

struct Series {
  std::vector<double> x, y;
  cv::Scalar color;
  std::string label;
};

// Minimal line chart: axes box, ticks at the ends, one polyline per series.
void write_plot(const fs::path& path, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                double x_max, const std::vector<Series>& series) {
  const int width = 560, height = 420, left = 60, right = 20, top = 40, bottom = 50;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = width - left - right, ph = height - top - bottom;
  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(std::lround(x / x_max * pw)),
                     top + ph - static_cast<int>(std::lround(std::clamp(y, 0.0, 1.0) * ph)));
  };
  for (int i = 0; i <= 4; ++i) {
    const int y = top + ph * i / 4;
    cv::line(img, {left, y}, {left + pw, y}, cv::Scalar(225, 225, 225), 1);
    std::ostringstream t;
    t << std::setprecision(2) << 1.0 - 0.25 * i;
    cv::putText(img, t.str(), {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, cv::Scalar(0, 0, 0), 1);
  cv::putText(img, title, {left, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.55, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::putText(img, xlabel, {left + pw / 2 - 40, height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1,
              cv::LINE_AA);
  cv::putText(img, ylabel, {4, top - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::putText(img, "0", {left - 4, top + ph + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::putText(img, fmt(x_max), {left + pw - 12, top + ph + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1,
              cv::LINE_AA);
  int legend_y = top + 18;
  for (const Series& s : series) {
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts.push_back(to_px(s.x[i], s.y[i]));
    cv::polylines(img, pts, false, s.color, 2, cv::LINE_AA);
    cv::putText(img, s.label, {left + pw - 190, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.45, s.color, 1, cv::LINE_AA);
    legend_y += 18;
  }
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves) {
  std::vector<double> out(curves.front().size(), 0.0);
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.size(); ++i) out[i] += c[i] / static_cast<double>(curves.size());
  return out;
}

std::vector<double> tail(const std::vector<double>& v) { return {v.begin() + 1, v.end()}; }

}  // namespace

std::vector<double> success_thresholds() {
  std::vector<double> t;
  for (int k = 0; k <= 20; ++k) t.push_back(k * 0.05);
  return t;
}

SuccessCurve success_curve(const std::vector<double>& ious) {
  if (ious.empty()) throw DataError("success curve of an empty IoU list");
  SuccessCurve out;
  for (double threshold : success_thresholds()) {
    std::size_t hits = 0;
    for (double v : ious) hits += v >= threshold ? 1 : 0;
    out.curve.push_back(static_cast<double>(hits) / static_cast<double>(ious.size()));
  }
  out.auc = std::accumulate(out.curve.begin(), out.curve.end(), 0.0) / static_cast<double>(out.curve.size());
  return out;
}

double precision_at(const std::vector<double>& center_errors, double tau) {
  if (center_errors.empty()) throw DataError("precision of an empty error list");
  std::size_t hits = 0;
  for (double e : center_errors) hits += e <= tau ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(center_errors.size());
}

int failure_count(const std::vector<double>& ious) {
  int failures = 0;
  bool on_target = true;
  for (double v : ious) {
    const bool now = v >= kFailureIou;
    if (on_target && !now) ++failures;
    on_target = now;
  }
  return failures;
}

OcclusionReport occlusion_report(const std::vector<double>& visibility, const std::vector<double>& ious) {
  if (visibility.size() != ious.size()) {
    throw DataError("visibility has " + std::to_string(visibility.size()) + " frames, tracking output " +
                    std::to_string(ious.size()));
  }
  OcclusionReport report;
  const int n = static_cast<int>(visibility.size());
  double seg_sum = 0, rec_sum = 0;
  int seg_count = 0, rec_count = 0;
  for (int t = 1; t < n;) {
    if (visibility[t] >= 0.5) {
      ++t;
      continue;
    }
    OcclusionSegment s;
    s.start = t;
    while (t < n && visibility[t] < 0.5) ++t;
    s.end = t - 1;
    double sum = 0;
    for (int k = s.start; k <= s.end; ++k) sum += ious[k];
    s.mean_iou = sum / (s.end - s.start + 1);
    seg_sum += sum;
    seg_count += s.end - s.start + 1;
    double rec = 0;
    for (int k = s.end + 1; k < std::min(n, s.end + 1 + kRecoveryWindow); ++k) {
      rec += ious[k];
      ++s.recovery_frames;
    }
    s.recovery_iou = mean_or_nan(rec, s.recovery_frames);
    rec_sum += rec;
    rec_count += s.recovery_frames;
    report.segments.push_back(s);
  }
  report.mean_iou = mean_or_nan(seg_sum, seg_count);
  report.recovery_iou = mean_or_nan(rec_sum, rec_count);
  report.combined_iou = mean_or_nan(seg_sum + rec_sum, seg_count + rec_count);
  report.failures = failure_count(tail(ious));
  return report;
}

EvalResult evaluate_sequence(const std::string& name, const std::vector<BoundingBox>& ground_truth,
                             const std::vector<BoundingBox>& predicted,
                             const std::optional<std::vector<double>>& visibility) {
  if (ground_truth.size() != predicted.size()) {
    throw DataError(name + ": " + std::to_string(predicted.size()) + " tracked boxes for " +
                    std::to_string(ground_truth.size()) + " frames");
  }
  if (ground_truth.size() < 2) throw DataError(name + ": need at least one tracked frame to evaluate");
  EvalResult r;
  r.sequence = name;
  for (std::size_t t = 0; t < ground_truth.size(); ++t) {
    r.ious.push_back(iou(ground_truth[t], predicted[t]));
    r.center_errors.push_back(center_distance(ground_truth[t], predicted[t]));
  }
  r.success = success_curve(tail(r.ious));
  r.precision20 = precision_at(tail(r.center_errors));
  r.failures = failure_count(tail(r.ious));
  if (visibility) r.occlusion = occlusion_report(*visibility, r.ious);
  return r;
}

double mean_auc(const std::vector<EvalResult>& results) {
  if (results.empty()) throw DataError("no evaluation results");
  double sum = 0;
  for (const EvalResult& r : results) sum += r.success.auc;
  return sum / static_cast<double>(results.size());
}

std::vector<EvalResult> evaluate_tracker(const HaftModel& model, const SequenceSource& source,
                                         const TrackConfig& config, int jobs, std::vector<TrackResult>* tracks) {
  const std::size_t n = source.count();
  if (n == 0) throw DataError("evaluation set is empty");
  std::vector<EvalResult> results(n);
  std::vector<TrackResult> outputs(n);
  auto run = [&](const HaftModel& m, std::size_t s) {
    outputs[s] = track_sequence(m, source, s, config);
    results[s] = evaluate_sequence(source.name(s), source.boxes(s), outputs[s].boxes, source.visibility(s));
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t s = 0; s < n; ++s) run(model, s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          const HaftModel local = model.clone();
          for (std::size_t s = next++; s < n; s = next++) run(local, s);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  if (tracks) *tracks = std::move(outputs);
  return results;
}

std::vector<LambdaRow> run_lambda_sweep(const HaftModel& model, const SequenceSource& source,
                                        const std::vector<double>& lambdas, const TrackConfig& base, int jobs) {
  if (lambdas.empty()) throw ConfigError("lambda sweep needs at least one value");
  std::vector<LambdaRow> rows;
  for (double lambda : lambdas) {
    TrackConfig cfg = base;
    cfg.lambda_fuse = lambda;
    rows.push_back({lambda, mean_auc(evaluate_tracker(model, source, cfg, jobs))});
  }
  return rows;
}

void write_lambda_sweep_csv(const fs::path& path, const std::vector<LambdaRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "lambda,mean_auc\n";
  for (const LambdaRow& r : rows) out << fmt(r.lambda) << ',' << fmt(r.mean_auc) << '\n';
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "losses,mean_auc,generator_loss_variance\n";
  for (const AblationRow& r : rows) out << r.name << ',' << fmt(r.mean_auc) << ',' << fmt(r.generator_loss_variance) << '\n';
}

void emit_report(const std::vector<EvalResult>& results, const fs::path& out_dir,
                 const std::vector<LambdaRow>& lambda_rows) {
  if (results.empty()) throw DataError("no evaluation results to report");
  fs::create_directories(out_dir / "sequences");
  std::ofstream summary(out_dir / "summary.csv");
  if (!summary) throw DataError("cannot write " + (out_dir / "summary.csv").string());
  summary << "sequence,auc,precision20,failures,occl_mean_iou,recovery_iou\n";
  for (const EvalResult& r : results) {
    const double occl = r.occlusion ? r.occlusion->mean_iou : kNaN;
    const double rec = r.occlusion ? r.occlusion->recovery_iou : kNaN;
    summary << r.sequence << ',' << fmt(r.success.auc) << ',' << fmt(r.precision20) << ',' << r.failures << ','
            << fmt(occl) << ',' << fmt(rec) << '\n';

    std::ofstream seq(out_dir / "sequences" / (r.sequence + ".csv"));
    seq << "frame_index,iou,center_error\n";
    for (std::size_t t = 0; t < r.ious.size(); ++t) seq << t << ',' << fmt(r.ious[t]) << ',' << fmt(r.center_errors[t]) << '\n';
  }

  std::vector<std::vector<double>> curves, precisions;
  std::vector<double> px;
  for (int tau = 0; tau <= 50; ++tau) px.push_back(tau);
  for (const EvalResult& r : results) {
    curves.push_back(r.success.curve);
    std::vector<double> p;
    for (double tau : px) p.push_back(precision_at(tail(r.center_errors), tau));
    precisions.push_back(p);
  }
  const double auc = mean_auc(results);
  write_plot(out_dir / "success.png", "Success plot", "overlap threshold", "success rate", 1.0,
             {{success_thresholds(), mean_curve(curves), cv::Scalar(180, 60, 20), "mean AUC " + fmt(std::round(auc * 1000) / 1000)}});
  const std::vector<double> mean_p = mean_curve(precisions);
  write_plot(out_dir / "precision.png", "Precision plot", "location error threshold (px)", "precision", 50.0,
             {{px, mean_p, cv::Scalar(30, 120, 30), "P@20 " + fmt(std::round(mean_p[20] * 1000) / 1000)}});
  if (!lambda_rows.empty()) {
    write_lambda_sweep_csv(out_dir / "lambda_sweep.csv", lambda_rows);
    Series s{{}, {}, cv::Scalar(20, 20, 180), "mean AUC"};
    for (const LambdaRow& r : lambda_rows) {
      s.x.push_back(r.lambda);
      s.y.push_back(r.mean_auc);
    }
    write_plot(out_dir / "lambda_sweep.png", "AUC vs lambda", "lambda", "mean AUC", 1.0, {s});
  }
}

}  // namespace haft
