#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "haft/model.hpp"
#include "haft/synthetic.hpp"
#include "haft/tracker.hpp"
#include "haft/trainer.hpp"

namespace haft {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_schema();

/// Closest schema key by edit distance.
std::string nearest_key(const std::string& key);

/// Flat key/value configuration. Holds every schema key; unknown keys are rejected.
class Config {
 public:
  Config();

  /// `key = value` lines; `#` starts a comment. Throws ConfigError naming the line.
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);
  /// Starts from defaults and applies every known key of `values`.
  static Config from_map(const std::map<std::string, std::string>& values);

  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  /// Every key, schema order, with its help text as a comment.
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

SynthConfig synth_config(const Config& config);
/// Held-out evaluation scenes: synth.* with eval.length and eval.occluders.
SynthConfig eval_synth_config(const Config& config);
ModelConfig model_config(const Config& config);
TrainConfig train_config(const Config& config);
TrackConfig track_config(const Config& config);

/// First scene seeds of the training and held-out synthetic sets, from independent substreams.
std::uint64_t train_scene_seed(const Config& config);
std::uint64_t eval_scene_seed(const Config& config);

}  // namespace haft
