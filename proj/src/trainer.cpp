#include "haft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

// Per-clip localization targets on the feature grid.
struct GridTarget {
  nn::Tensor label;   // [h,w]
  nn::Tensor weight;  // [h,w]
};

GridTarget grid_target(const BoundingBox& box_in_patch, const FeatureGeometry& geometry, int h, int w,
                       const LocalizerConfig& cfg) {
  const LabelMap z =
      gaussian_label(geometry.to_cell(box_in_patch.center_y()), geometry.to_cell(box_in_patch.center_x()), cfg.sigma, h, w);
  return {z.values, region_weight(z, cfg.sigma, cfg.region_factor)};
}

nn::Tensor stack_maps(const std::vector<nn::Tensor>& maps) {
  const int h = maps.front().dim(0), w = maps.front().dim(1);
  nn::Tensor out({static_cast<int>(maps.size()), 1, h, w});
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < maps.size(); ++i) std::copy(maps[i].data(), maps[i].data() + n, out.data() + i * n);
  return out;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void LossWeights::validate() const {
  require(w_V >= 0 && w_R >= 0 && w_L >= 0 && w_S >= 0, "loss weights must be non-negative");
  require(lambda_fuse >= 0.0 && lambda_fuse <= 1.0, "lambda must lie in [0, 1]");
}

void TrainConfig::validate() const {
  require(clip_length >= 2, "train.clip_length must be at least 2");
  require(batch_size >= 1, "train.batch_size must be at least 1");
  require(iterations_per_epoch >= 1 && epochs >= 1, "train.epochs and train.iterations_per_epoch must be positive");
  require(lr > 0.0, "train.lr must be positive");
  require(decay > 0.0 && decay <= 1.0, "train.decay must lie in (0, 1]");
  require(decay_period >= 1, "train.decay_period must be at least 1");
  require(mask.probability >= 0.0 && mask.probability <= 1.0, "train.p_mask must lie in [0, 1]");
  require(grad_clip > 0.0, "train.grad_clip must be positive");
  require(filter_iters >= 1, "train.filter_iters must be at least 1");
  weights.validate();
}

double learning_rate(const TrainConfig& config, int epoch) {
  if (epoch < 1) throw ConfigError("epochs are counted from 1");
  return config.lr * std::pow(config.decay, static_cast<double>((epoch - 1) / config.decay_period));
}

TrainingClip sample_clip(const SequenceSource& source, const TrainConfig& config, const CropConfig& crop, Rng& rng) {
  const int frames = config.clip_length + 1;
  std::vector<std::size_t> eligible;
  for (std::size_t s = 0; s < source.count(); ++s) {
    if (source.length(s) >= frames) eligible.push_back(s);
  }
  if (eligible.empty()) {
    throw DataError("no training sequence has the " + std::to_string(frames) + " frames a clip needs");
  }
  TrainingClip clip;
  clip.sequence = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  const std::vector<BoundingBox>& boxes = source.boxes(clip.sequence);
  clip.start = std::uniform_int_distribution<int>(0, static_cast<int>(boxes.size()) - frames)(rng);

  for (int k = 0; k < frames; ++k) {
    const int t = clip.start + k;
    const Image frame = source.frame(clip.sequence, t);
    if (k == 0) {
      clip.targets.push_back(crop_search_region(frame, boxes[t], {}, crop, rng));
    } else {
      clip.targets.push_back(crop_search_region(frame, boxes[t - 1], config.jitter, crop, rng, boxes[t]));
    }
  }
  clip.inputs.push_back(clip.targets.front());
  clip.masks.emplace_back();
  for (int k = 1; k < frames; ++k) {
    auto [patch, mask] = apply_random_mask(clip.targets[k], config.mask, rng);
    clip.inputs.push_back(std::move(patch));
    clip.masks.push_back(std::move(mask));
  }
  return clip;
}

std::pair<double, LossReport> total_loss(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {{"l_V", c.l_V}, {"l_R", c.l_R}, {"l_L", c.l_L}, {"l_S", c.l_S}};
  for (const auto& [name, value] : named) {
    if (!finite(value)) throw DivergenceError(std::string("non-finite loss component ") + name);
  }
  LossReport report;
  report.components = c;
  report.total = w.w_V * c.l_V + w.w_R * c.l_R + w.w_L * c.l_L + w.w_S * c.l_S;
  return {report.total, report};
}

Trainer::Trainer(HaftModel model, const TrainConfig& config)
    : model_(std::move(model)),
      config_(config),
      generator_opt_(trainable(model_.generator_arrays())),
      discriminator_opt_(trainable(model_.discriminator_arrays())) {
  config_.validate();
}

LossReport Trainer::train_step(const std::vector<TrainingClip>& batch, double lr) {
  if (batch.empty()) throw ShapeError("empty training batch");
  const int n = batch.front().length();
  const int b_count = static_cast<int>(batch.size());
  const LossWeights& w = config_.weights;
  const double lambda = w.lambda_fuse;
  LossReport report;
  report.iteration = iteration_;
  report.lr = lr;

  // One backbone pass over every distinct crop: unmasked targets plus masked inputs.
  std::vector<const Image*> images;
  std::vector<std::vector<int>> target_row(batch.size()), input_row(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].length() != n) throw ShapeError("clips in a batch must share their length");
    for (int k = 0; k <= n; ++k) {
      target_row[b].push_back(static_cast<int>(images.size()));
      images.push_back(&batch[b].targets[k].pixels);
    }
    for (int k = 0; k <= n; ++k) {
      if (batch[b].masks[k].empty()) {
        input_row[b].push_back(target_row[b][k]);
      } else {
        input_row[b].push_back(static_cast<int>(images.size()));
        images.push_back(&batch[b].inputs[k].pixels);
      }
    }
  }
  const FeatureMap all = extract_features(model_.backbone, images, true);
  const FeatureGeometry geometry = all.geometry;
  const int h = all.height(), wd = all.width();

  auto rows = [&](const std::vector<std::vector<int>>& table, int k) {
    std::vector<int> idx;
    for (int b = 0; b < b_count; ++b) idx.push_back(table[b][k]);
    return FeatureMap{nn::gather(all.values, idx), geometry};
  };
  std::vector<FeatureMap> alphas, betas;
  for (int k = 0; k <= n; ++k) {
    alphas.push_back(rows(input_row, k));
    betas.push_back(rows(target_row, k));
  }

  // Forecasts for frames 1..n from observations 0..n-1.
  const std::vector<FeatureMap> etas =
      rollout(model_.predictor, alphas.front(), std::vector<FeatureMap>(alphas.begin(), alphas.end() - 1));
  std::vector<FeatureMap> future_betas;
  std::vector<nn::Var> conds, reals, fakes;
  for (int k = 1; k <= n; ++k) {
    future_betas.push_back(betas[k].detached());
    conds.push_back(alphas[k - 1].values.detach());
    reals.push_back(betas[k].values.detach());
    fakes.push_back(etas[k - 1].values);
  }
  const nn::Var l_R = loss_reconstruction(etas, future_betas);
  const FeatureMap cond{nn::concat(conds, 0), geometry};
  const FeatureMap real{nn::concat(reals, 0), geometry};
  const FeatureMap fake{nn::concat(fakes, 0), geometry};

  // Discriminator update on detached features.
  const nn::Var l_D = discriminator_objective(model_.discriminator, cond, real, fake, true);
  report.l_D = l_D.item();
  bool ok = finite(report.l_D);
  if (ok) {
    discriminator_opt_.zero_grad();
    l_D.backward();
    clip_grad_norm(discriminator_opt_.params(), config_.grad_clip);
    discriminator_opt_.step(lr);
  }

  // Generator losses, adversarial term against the updated discriminator.
  const nn::Var l_V = loss_generator(discriminate(model_.discriminator, cond, fake, true));

  const LocalizerConfig& loc = model_.config().localizer;
  Rng size_rng = make_rng(config_.seed, "train.size", static_cast<std::uint64_t>(iteration_));
  std::vector<nn::Var> responses, size_terms;
  std::vector<nn::Tensor> labels, weights;
  for (int b = 0; b < b_count; ++b) {
    const TrainingClip& clip = batch[b];
    // Filter learned on the detached template feature, as at track time.
    const FeatureMap tpl = alphas.front().item(b);
    const GridTarget tz = grid_target(clip.targets[0].target_box_in_patch, geometry, h, wd, loc);
    SampleMemory memory(1);
    memory.insert(tpl.values.value(), LabelMap{tz.label, 0.0, 0.0}, tz.weight);
    const Filter filter = learn_filter(memory, Filter::zeros(all.channels(), loc.filter_size), config_.filter_iters,
                                       loc.reg_lambda);
    const PooledFeature tpl_pool = pool_region(tpl, clip.targets[0].target_box_in_patch, model_.config().pool_size);

    std::vector<nn::Var> fused;
    std::vector<nn::Tensor> clip_labels, clip_weights;
    for (int k = 1; k <= n; ++k) {
      const nn::Var eta = nn::gather(etas[k - 1].values, {b});
      const nn::Var beta = nn::gather(alphas[k].values, {b});
      const nn::Var x = nn::affine(eta, lambda) + nn::affine(beta, 1.0 - lambda);
      fused.push_back(x);
      const GridTarget z = grid_target(clip.targets[k].target_box_in_patch, geometry, h, wd, loc);
      clip_labels.push_back(z.label);
      clip_weights.push_back(z.weight);
      size_terms.push_back(size_loss(model_.iou_head, tpl_pool, FeatureMap{x, geometry},
                                     clip.targets[k].target_box_in_patch, config_.size, size_rng));
    }
    responses.push_back(correlate(nn::concat(fused, 0), nn::Var(filter.values)));
    labels.push_back(stack_maps(clip_labels));
    weights.push_back(stack_maps(clip_weights));
  }
  const nn::Var l_L = localization_loss(responses, labels, weights);
  nn::Var l_S = size_terms.front();
  for (std::size_t i = 1; i < size_terms.size(); ++i) l_S = l_S + size_terms[i];
  l_S = nn::affine(l_S, 1.0 / static_cast<double>(size_terms.size()));

  report.components = {l_V.item(), l_R.item(), l_L.item(), l_S.item()};
  report.total = w.w_V * report.components.l_V + w.w_R * report.components.l_R + w.w_L * report.components.l_L +
                 w.w_S * report.components.l_S;
  ok = ok && finite(report.total) && finite(report.components.l_V) && finite(report.components.l_R) &&
       finite(report.components.l_L) && finite(report.components.l_S);

  if (ok) {
    const nn::Var total = nn::affine(l_V, w.w_V) + nn::affine(l_R, w.w_R) + nn::affine(l_L, w.w_L) +
                          nn::affine(l_S, w.w_S);
    generator_opt_.zero_grad();
    total.backward();
    clip_grad_norm(generator_opt_.params(), config_.grad_clip);
    generator_opt_.step(lr);
    consecutive_skips_ = 0;
  } else {
    report.skipped = true;
    ++skipped_total_;
    if (++consecutive_skips_ >= config_.max_consecutive_skips) {
      throw DivergenceError("training diverged: " + std::to_string(consecutive_skips_) +
                            " consecutive non-finite steps at iteration " + std::to_string(iteration_));
    }
  }
  ++iteration_;
  return report;
}

Checkpoint Trainer::checkpoint(const std::map<std::string, std::string>& config_snapshot) const {
  Checkpoint ck;
  ck.arrays = snapshot(model_.generator_arrays(), false);
  auto append = [&](const nn::ParamList& list) {
    const auto s = snapshot(list, true);
    ck.arrays.insert(ck.arrays.end(), s.begin(), s.end());
  };
  append(model_.discriminator_arrays());
  append(generator_opt_.state_arrays());
  append(discriminator_opt_.state_arrays());
  ck.arrays.push_back({"trainer.state",
                       nn::Tensor({3}, {static_cast<double>(generator_opt_.steps()),
                                        static_cast<double>(discriminator_opt_.steps()),
                                        static_cast<double>(skipped_total_)}),
                       true});
  ck.config = config_snapshot;
  ck.iteration = iteration_;
  ck.seed = config_.seed;
  return ck;
}

void Trainer::resume(const Checkpoint& ck) {
  nn::ParamList arrays = model_.all_arrays();
  for (const auto* opt : {&generator_opt_, &discriminator_opt_}) {
    const nn::ParamList s = opt->state_arrays();
    arrays.insert(arrays.end(), s.begin(), s.end());
  }
  nn::Var state{nn::Tensor({3})};
  arrays.push_back({"trainer.state", state, false});
  restore(ck, arrays);
  generator_opt_.set_steps(static_cast<std::int64_t>(state.value()[0]));
  discriminator_opt_.set_steps(static_cast<std::int64_t>(state.value()[1]));
  skipped_total_ = static_cast<std::int64_t>(state.value()[2]);
  iteration_ = ck.iteration;
  consecutive_skips_ = 0;
}

std::vector<TrainingClip> sample_batch(const SequenceSource& source, const TrainConfig& config, const CropConfig& crop,
                                       std::int64_t iteration) {
  std::vector<TrainingClip> batch;
  for (int b = 0; b < config.batch_size; ++b) {
    Rng rng = make_rng(config.seed, "train.clip",
                       static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(config.batch_size) + b);
    batch.push_back(sample_clip(source, config, crop, rng));
  }
  return batch;
}

void write_log_header(std::ostream& out) { out << "iteration,lr,l_V,l_R,l_L,l_S,total\n"; }

void write_log_row(std::ostream& out, const LossReport& r) {
  out << r.iteration << ',' << std::setprecision(10) << r.lr << ',' << r.components.l_V << ',' << r.components.l_R
      << ',' << r.components.l_L << ',' << r.components.l_S << ',' << r.total << '\n';
}

std::vector<LossReport> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read training log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "iteration,lr,l_V,l_R,l_L,l_S,total") throw DataError(path.string() + ": unexpected log header");
  std::vector<LossReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    LossReport r;
    LossComponents& c = r.components;
    if (!(fields >> r.iteration >> r.lr >> c.l_V >> c.l_R >> c.l_L >> c.l_S >> r.total)) {
      throw DataError(path.string() + ": malformed row " + std::to_string(rows.size() + 2));
    }
    rows.push_back(r);
  }
  return rows;
}

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const SequenceSource& source,
                  const TrainOptions& options) {
  config.validate();
  if (source.count() == 0) throw DataError("training dataset is empty");
  Trainer trainer(HaftModel(model_config, config.seed), config);
  if (options.resume_from) trainer.resume(load_checkpoint(*options.resume_from));

  std::ofstream log;
  const bool write = !options.out_dir.empty();
  if (write) {
    fs::create_directories(options.out_dir);
    const fs::path log_path = options.out_dir / "train_log.csv";
    const bool fresh = !options.resume_from || !fs::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) write_log_header(log);
  }

  TrainResult result;
  const std::int64_t total = config.total_iterations();
  std::int64_t budget = options.max_iterations.value_or(total);
  while (trainer.iteration() < total && budget-- > 0) {
    const std::int64_t it = trainer.iteration();
    const int epoch = static_cast<int>(it / config.iterations_per_epoch) + 1;
    const double lr = learning_rate(config, epoch);
    const LossReport report = trainer.train_step(sample_batch(source, config, model_config.crop, it), lr);
    result.log.push_back(report);
    if (write) {
      write_log_row(log, report);
      log.flush();
    }
    if (options.on_step) options.on_step(report);
    if (write && trainer.iteration() % config.iterations_per_epoch == 0) {
      save_checkpoint(trainer.checkpoint(options.config_snapshot), options.out_dir / "checkpoint");
    }
  }
  result.checkpoint = trainer.checkpoint(options.config_snapshot);
  if (write) save_checkpoint(result.checkpoint, options.out_dir / "checkpoint");
  return result;
}

}  // namespace haft
