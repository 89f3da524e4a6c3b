#include "haft/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>

#include "haft/config.hpp"
#include "haft/errors.hpp"
#include "haft/evaluator.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "overrides the seed key");
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (out_required) out->required();
  cmd->add_option("--jobs", c.jobs, "parallel tracking workers")->check(CLI::PositiveNumber);
  cmd->add_option("--set", c.overrides, "key=value override, repeatable");
}

Config resolve(const Common& c) {
  Config config = c.config_path.empty() ? Config() : Config::load(c.config_path);
  for (const std::string& o : c.overrides) config.set_assignment(o);
  if (c.seed) config.set("seed", std::to_string(*c.seed));
  return config;
}

std::unique_ptr<SequenceSource> training_source(const Config& config, const std::string& data) {
  if (!data.empty()) return std::make_unique<DirectorySource>(data);
  return std::make_unique<SyntheticSource>(synth_config(config), train_scene_seed(config),
                                           config.get_int("synth.sequences"));
}

std::unique_ptr<SequenceSource> eval_source(const Config& config, const std::string& data) {
  if (!data.empty()) return std::make_unique<DirectorySource>(data);
  return std::make_unique<SyntheticSource>(eval_synth_config(config), eval_scene_seed(config),
                                           config.get_int("eval.sequences"));
}

struct LoadedModel {
  HaftModel model;
  Checkpoint checkpoint;
};

LoadedModel load_model(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(fs::path(dir) / "manifest.json")) throw DataError("no checkpoint at " + dir);
  Checkpoint ck = load_checkpoint(dir, false);
  HaftModel model(model_config(Config::from_map(ck.config)), ck.seed);
  restore(ck, model.generator_arrays());
  return {std::move(model), std::move(ck)};
}

void write_sequences(const SequenceSource& source, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t s = 0; s < source.count(); ++s) save_sequence(source.materialize(s), dir / source.name(s));
}

double variance_of_tail(const std::vector<LossReport>& log, std::size_t window) {
  if (log.empty()) return std::nan("");
  const std::size_t n = std::min(window, log.size());
  double mean = 0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) mean += log[i].components.l_V / n;
  double var = 0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) {
    const double d = log[i].components.l_V - mean;
    var += d * d / n;
  }
  return var;
}

int cmd_synth(const Common& c, const std::string& split, std::ostream& out) {
  const Config config = resolve(c);
  const fs::path root = c.out;
  fs::create_directories(root);
  config.write(root / "resolved_config.txt");
  if (split == "train" || split == "both") {
    write_sequences(*training_source(config, ""), root / "train");
  }
  if (split == "eval" || split == "both") {
    write_sequences(*eval_source(config, ""), root / "eval");
  }
  out << "wrote synthetic " << split << " data to " << root.string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& resume, std::ostream& out) {
  const Config config = resolve(c);
  const TrainConfig tc = train_config(config);
  const ModelConfig mc = model_config(config);
  const auto source = training_source(config, data);
  const fs::path root = c.out;
  fs::create_directories(root);
  config.write(root / "resolved_config.txt");
  TrainOptions options;
  options.out_dir = root;
  options.config_snapshot = config.values();
  if (!resume.empty()) options.resume_from = fs::path(resume);
  const TrainResult result = train(tc, mc, *source, options);
  out << "trained " << result.checkpoint.iteration << " iterations; checkpoint in " << (root / "checkpoint").string()
      << '\n';
  return 0;
}

int cmd_track(const Common& c, const std::string& checkpoint, const std::string& sequence, std::ostream& out) {
  const Config config = resolve(c);
  const TrackConfig tc = track_config(config);
  const LoadedModel loaded = load_model(checkpoint);
  if (sequence.empty()) throw ConfigError("--sequence is required");
  InMemorySource source({load_sequence(sequence)});
  const TrackResult result = track_sequence(loaded.model, source, 0, tc);
  const fs::path csv = c.out;
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_tracking_csv(csv, result);
  config.write(csv.parent_path() / "resolved_config.txt");
  out << "tracked " << result.boxes.size() << " frames into " << csv.string() << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& tracks, const std::string& checkpoint,
             std::ostream& out) {
  const Config config = resolve(c);
  const fs::path root = c.out;
  const auto owned = eval_source(config, data);
  const SequenceSource& source = *owned;
  std::vector<EvalResult> results;
  if (!tracks.empty()) {
    for (std::size_t s = 0; s < source.count(); ++s) {
      const TrackResult t = read_tracking_csv(fs::path(tracks) / (source.name(s) + ".csv"));
      results.push_back(evaluate_sequence(source.name(s), source.boxes(s), t.boxes, source.visibility(s)));
    }
  } else {
    const LoadedModel loaded = load_model(checkpoint);
    std::vector<TrackResult> outputs;
    results = evaluate_tracker(loaded.model, source, track_config(config), c.jobs, &outputs);
    fs::create_directories(root / "tracks");
    for (std::size_t s = 0; s < source.count(); ++s) {
      write_tracking_csv(root / "tracks" / (source.name(s) + ".csv"), outputs[s]);
    }
  }
  fs::create_directories(root);
  config.write(root / "resolved_config.txt");
  emit_report(results, root);
  out << "mean AUC " << mean_auc(results) << " over " << results.size() << " sequences; report in " << root.string()
      << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::string& data, std::ostream& out) {
  const Config config = resolve(c);
  const fs::path root = c.out;
  fs::create_directories(root);
  config.write(root / "resolved_config.txt");
  const auto train_src = training_source(config, data.empty() ? "" : (fs::path(data) / "train").string());
  const auto eval_src = eval_source(config, data.empty() ? "" : (fs::path(data) / "eval").string());
  const ModelConfig mc = model_config(config);
  const TrackConfig track = track_config(config);

  struct Variant {
    const char* name;
    bool gan;
    bool l2;
  };
  const Variant variants[] = {{"none", false, false}, {"gan_only", true, false}, {"l2_only", false, true},
                              {"both", true, true}};
  std::vector<AblationRow> rows;
  std::optional<HaftModel> both;
  for (const Variant& v : variants) {
    Config vc = config;
    if (!v.gan) vc.set("train.w_V", "0");
    if (!v.l2) vc.set("train.w_R", "0");
    const fs::path dir = root / v.name;
    TrainOptions options;
    options.out_dir = dir;
    options.config_snapshot = vc.values();
    std::optional<Checkpoint> done;
    if (fs::exists(dir / "checkpoint" / "manifest.json")) {
      Checkpoint ck = load_checkpoint(dir / "checkpoint");
      if (ck.config == vc.values()) {
        if (ck.iteration >= train_config(vc).total_iterations()) {
          done = std::move(ck);
        } else {
          options.resume_from = dir / "checkpoint";
        }
      }
    }
    if (!done) {
      fs::create_directories(dir);
      vc.write(dir / "resolved_config.txt");
      done = train(train_config(vc), mc, *train_src, options).checkpoint;
    }
    HaftModel model(mc, done->seed);
    restore(*done, model.all_arrays());
    const double auc = mean_auc(evaluate_tracker(model, *eval_src, track, c.jobs));
    rows.push_back({v.name, auc, variance_of_tail(read_train_log(dir / "train_log.csv"), 500)});
    out << v.name << ": mean AUC " << auc << '\n';
    if (std::string(v.name) == "both") both = std::move(model);
  }
  write_ablation_csv(root / "ablation.csv", rows);

  std::vector<double> lambdas = config.get_list("eval.lambdas");
  const std::vector<LambdaRow> sweep = run_lambda_sweep(*both, *eval_src, lambdas, track, c.jobs);
  std::vector<TrackResult> tracks;
  const std::vector<EvalResult> results = evaluate_tracker(*both, *eval_src, track, c.jobs, &tracks);
  emit_report(results, root / "report", sweep);
  write_lambda_sweep_csv(root / "lambda_sweep.csv", sweep);
  out << "ablation table in " << (root / "ablation.csv").string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-forecasting visual object tracker", "haft"};
  app.require_subcommand(1);
  Common common;
  std::string split = "both", data, resume, checkpoint, sequence, tracks;

  auto* synth = app.add_subcommand("synth", "generate synthetic training and held-out sequences");
  add_common(synth, common, true);
  synth->add_option("--split", split, "train, eval or both")->check(CLI::IsMember({"train", "eval", "both"}));

  auto* trn = app.add_subcommand("train", "train a checkpoint");
  add_common(trn, common, true);
  trn->add_option("--data", data, "directory of sequence directories (default: synthetic scenes)");
  trn->add_option("--resume", resume, "checkpoint directory to continue from");

  auto* trk = app.add_subcommand("track", "track one sequence");
  add_common(trk, common, true);
  trk->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  trk->add_option("--sequence", sequence, "sequence directory")->required();

  auto* evl = app.add_subcommand("eval", "evaluate tracking results");
  add_common(evl, common, true);
  evl->add_option("--data", data, "directory of sequence directories (default: held-out synthetic scenes)");
  evl->add_option("--tracks", tracks, "directory of <sequence>.csv tracking outputs");
  evl->add_option("--checkpoint", checkpoint, "track with this checkpoint instead of reading --tracks");

  auto* abl = app.add_subcommand("ablate", "loss ablation and lambda sweep");
  add_common(abl, common, true);
  abl->add_option("--data", data, "directory with train/ and eval/ sequence sets (default: synthetic)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "haft: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, split, out);
    if (trn->parsed()) return cmd_train(common, data, resume, out);
    if (trk->parsed()) return cmd_track(common, checkpoint, sequence, out);
    if (evl->parsed()) {
      if (tracks.empty() && checkpoint.empty()) throw ConfigError("eval needs --tracks or --checkpoint");
      return cmd_eval(common, data, tracks, checkpoint, out);
    }
    if (abl->parsed()) return cmd_ablate(common, data, out);
  } catch (const ConfigError& e) {
    err << "haft: config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "haft: data error: " << e.what() << '\n';
    return 3;
  } catch (const DivergenceError& e) {
    err << "haft: diverged: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "haft: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace haft
