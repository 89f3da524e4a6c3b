#include "haft/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

bool known(const std::string& key) {
  const auto& schema = config_schema();
  return std::any_of(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == key; });
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "' = '" + value + "' is not " + expected);
}

std::array<int, 4> four_ints(const Config& c, const std::string& key) {
  const std::vector<double> v = c.get_list(key);
  if (v.size() != 4) throw ConfigError("config key '" + key + "' needs 4 comma-separated integers");
  std::array<int, 4> out{};
  for (int i = 0; i < 4; ++i) {
    if (v[i] != static_cast<int>(v[i]) || v[i] < 1) bad_value(key, c.get(key), "a list of positive integers");
    out[i] = static_cast<int>(v[i]);
  }
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", "1", "root of every random stream"},
      {"synth.sequences", "200", "training scenes"},
      {"synth.length", "80", "frames per scene"},
      {"synth.width", "192", "frame width (px)"},
      {"synth.height", "192", "frame height (px)"},
      {"synth.target_min_size", "16", "target side range (px)"},
      {"synth.target_max_size", "28", ""},
      {"synth.speed_min", "0.4", "target speed range (px/frame)"},
      {"synth.speed_max", "1.6", ""},
      {"synth.wobble_amplitude", "4", "sideways oscillation (px)"},
      {"synth.scale_amplitude", "0.08", "relative size oscillation"},
      {"synth.pixel_noise", "0.02", "per-pixel noise sigma"},
      {"synth.occluders", "", "start:end:coverage[;...] for training scenes"},
      {"eval.sequences", "20", "held-out scenes"},
      {"eval.length", "80", "frames per held-out scene"},
      {"eval.occluders", "35:44:1", "scripted occlusions in held-out scenes"},
      {"eval.lambdas", "0,0.1,0.2,0.3,0.5,0.8,1", "lambda sweep"},
      {"model.channels", "32,64,64,64", "backbone widths"},
      {"model.strides", "2,2,2,1", "backbone strides"},
      {"model.disc_width", "64", "discriminator width"},
      {"model.pool_size", "3", "region pooling grid"},
      {"model.patch_size", "128", "search patch side (px)"},
      {"model.context_factor", "5", "search region side / target scale"},
      {"model.filter_size", "5", "correlation filter side (cells, odd)"},
      {"model.label_sigma", "1", "Gaussian label width (cells)"},
      {"model.region_factor", "2", "loss weight near the target"},
      {"model.reg_lambda", "0.01", "filter regularization"},
      {"model.memory_capacity", "50", "online sample memory"},
      {"model.memory_decay", "0.99", ""},
      {"train.clip_length", "16", "frames per clip (N)"},
      {"train.batch_size", "4", "clips per step"},
      {"train.iterations_per_epoch", "200", ""},
      {"train.epochs", "10", ""},
      {"train.lr", "0.001", "base learning rate"},
      {"train.decay", "0.2", "learning rate factor per period"},
      {"train.decay_period", "4", "epochs per decay"},
      {"train.p_mask", "0.3", "probability of masking an input frame"},
      {"train.mask_min_coverage", "0.3", "masked fraction of the target box"},
      {"train.mask_max_coverage", "0.7", ""},
      {"train.jitter_scale", "0.1", "crop jitter"},
      {"train.jitter_shift", "0.15", ""},
      {"train.w_V", "0.1", "adversarial loss weight"},
      {"train.w_R", "1", "reconstruction loss weight"},
      {"train.w_L", "1", "localization loss weight"},
      {"train.w_S", "1", "size loss weight"},
      {"train.lambda", "0.2", "feature fusion weight during training"},
      {"train.grad_clip", "10", "global gradient norm limit"},
      {"train.filter_iters", "10", "filter solver iterations per clip"},
      {"train.size_candidates", "8", "jittered boxes per size loss"},
      {"train.size_jitter", "0.3", ""},
      {"train.max_consecutive_skips", "10", "abort after this many non-finite steps"},
      {"track.lambda", "0.2", "feature fusion weight"},
      {"track.use_predictor", "true", "false: localize on real features only"},
      {"track.update_threshold", "0.25", "confidence needed to add a sample"},
      {"track.init_filter_iters", "10", ""},
      {"track.update_filter_iters", "2", ""},
      {"track.update_interval", "10", "frames between forced filter updates"},
      {"track.candidates", "10", "refinement starts"},
      {"track.top_k", "3", "refined boxes averaged"},
      {"track.candidate_jitter", "0.1", ""},
      {"track.refine_steps", "5", ""},
      {"track.refine_step", "0.1", ""},
      {"track.size_rate", "1", "fraction of the refined size change applied per frame"},
      {"track.refine_center", "true", "false: keep the localizer peak as the center"},
  };
  return schema;
}

std::string nearest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const ConfigKey& k : config_schema()) {
    const std::size_t d = edit_distance(key, k.name);
    if (d < best_d) {
      best_d = d;
      best = k.name;
    }
  }
  return best;
}

Config::Config() {
  for (const ConfigKey& k : config_schema()) values_[k.name] = k.default_value;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

Config Config::from_map(const std::map<std::string, std::string>& values) {
  Config c;
  for (const auto& [k, v] : values) {
    if (known(k)) c.values_[k] = v;
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigError("unknown config key '" + key + "' (did you mean '" + nearest_key(key) + "'?)");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

int Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      bad_value(key, get(key), "a comma-separated list of numbers");
    }
  }
  return out;
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const ConfigKey& k : config_schema()) {
    out << k.name << " = " << values_.at(k.name);
    if (!k.help.empty()) out << "  # " << k.help;
    out << '\n';
  }
  return out.str();
}

void Config::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << dump();
}

SynthConfig synth_config(const Config& c) {
  SynthConfig s;
  s.length = c.get_int("synth.length");
  s.width = c.get_int("synth.width");
  s.height = c.get_int("synth.height");
  s.target_min_size = c.get_double("synth.target_min_size");
  s.target_max_size = c.get_double("synth.target_max_size");
  s.speed_min = c.get_double("synth.speed_min");
  s.speed_max = c.get_double("synth.speed_max");
  s.wobble_amplitude = c.get_double("synth.wobble_amplitude");
  s.scale_amplitude = c.get_double("synth.scale_amplitude");
  s.pixel_noise = c.get_double("synth.pixel_noise");
  s.occluders = parse_occluder_script(c.get("synth.occluders"));
  return s;
}

SynthConfig eval_synth_config(const Config& c) {
  SynthConfig s = synth_config(c);
  s.length = c.get_int("eval.length");
  s.occluders = parse_occluder_script(c.get("eval.occluders"));
  return s;
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  m.backbone.channels = four_ints(c, "model.channels");
  m.backbone.strides = four_ints(c, "model.strides");
  m.disc_width = c.get_int("model.disc_width");
  m.pool_size = c.get_int("model.pool_size");
  m.crop.patch_size = c.get_int("model.patch_size");
  m.crop.context_factor = c.get_double("model.context_factor");
  m.localizer.filter_size = c.get_int("model.filter_size");
  m.localizer.sigma = c.get_double("model.label_sigma");
  m.localizer.region_factor = c.get_double("model.region_factor");
  m.localizer.reg_lambda = c.get_double("model.reg_lambda");
  m.localizer.memory_capacity = c.get_int("model.memory_capacity");
  m.localizer.memory_decay = c.get_double("model.memory_decay");
  if (m.disc_width < 1 || m.pool_size < 1 || m.crop.patch_size < 8 || !(m.crop.context_factor > 0.0)) {
    throw ConfigError("model.* sizes must be positive (patch at least 8 px)");
  }
  if (m.localizer.filter_size < 1 || m.localizer.memory_capacity < 1 || !(m.localizer.sigma > 0.0) ||
      !(m.localizer.reg_lambda > 0.0) || !(m.localizer.memory_decay > 0.0 && m.localizer.memory_decay <= 1.0)) {
    throw ConfigError("model.* localizer settings are out of range");
  }
  return m;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.clip_length = c.get_int("train.clip_length");
  t.batch_size = c.get_int("train.batch_size");
  t.iterations_per_epoch = c.get_int("train.iterations_per_epoch");
  t.epochs = c.get_int("train.epochs");
  t.lr = c.get_double("train.lr");
  t.decay = c.get_double("train.decay");
  t.decay_period = c.get_int("train.decay_period");
  t.seed = c.get_u64("seed");
  t.mask.probability = c.get_double("train.p_mask");
  t.mask.min_coverage = c.get_double("train.mask_min_coverage");
  t.mask.max_coverage = c.get_double("train.mask_max_coverage");
  t.jitter.scale_range = c.get_double("train.jitter_scale");
  t.jitter.shift_range = c.get_double("train.jitter_shift");
  t.weights.w_V = c.get_double("train.w_V");
  t.weights.w_R = c.get_double("train.w_R");
  t.weights.w_L = c.get_double("train.w_L");
  t.weights.w_S = c.get_double("train.w_S");
  t.weights.lambda_fuse = c.get_double("train.lambda");
  t.grad_clip = c.get_double("train.grad_clip");
  t.filter_iters = c.get_int("train.filter_iters");
  t.size.n_candidates = c.get_int("train.size_candidates");
  t.size.jitter_sigma = c.get_double("train.size_jitter");
  t.max_consecutive_skips = c.get_int("train.max_consecutive_skips");
  t.validate();
  return t;
}

TrackConfig track_config(const Config& c) {
  TrackConfig t;
  t.lambda_fuse = c.get_double("track.lambda");
  t.use_predictor = c.get_bool("track.use_predictor");
  t.update_threshold = c.get_double("track.update_threshold");
  t.init_filter_iters = c.get_int("track.init_filter_iters");
  t.update_filter_iters = c.get_int("track.update_filter_iters");
  t.update_interval = c.get_int("track.update_interval");
  t.n_candidates = c.get_int("track.candidates");
  t.top_k = c.get_int("track.top_k");
  t.candidate_jitter = c.get_double("track.candidate_jitter");
  t.refine.n_steps = c.get_int("track.refine_steps");
  t.refine.step = c.get_double("track.refine_step");
  t.size_rate = c.get_double("track.size_rate");
  t.refine_center = c.get_bool("track.refine_center");
  t.seed = c.get_u64("seed");
  t.validate();
  return t;
}

std::uint64_t train_scene_seed(const Config& c) {
  Rng rng = make_rng(c.get_u64("seed"), "synth.train_scenes");
  return rng() >> 1;
}

std::uint64_t eval_scene_seed(const Config& c) {
  Rng rng = make_rng(c.get_u64("seed"), "synth.eval_scenes");
  return rng() >> 1;
}

}  // namespace haft
