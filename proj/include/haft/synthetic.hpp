#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "haft/data_io.hpp"

namespace haft {

/// Occluder present on frames [start_frame, end_frame]. A coverage of 1 hides the
/// whole swept target path; smaller values cover the top part of it.
struct OccluderSpan {
  int start_frame = 0;
  int end_frame = 0;
  double max_coverage = 1.0;
};

struct SynthConfig {
  int length = 80;
  int width = 192;
  int height = 192;
  double target_min_size = 16.0;
  double target_max_size = 28.0;
  double speed_min = 0.4;        // px / frame
  double speed_max = 1.6;
  double wobble_amplitude = 4.0;  // px, perpendicular to the motion direction
  double wobble_period_min = 20.0;
  double wobble_period_max = 40.0;
  double scale_amplitude = 0.08;  // relative size oscillation
  double pixel_noise = 0.02;
  std::uint64_t texture_seed = 0;  // 0: derive from the sequence seed
  std::vector<OccluderSpan> occluders;
};

/// Parses "start:end:coverage[;start:end:coverage...]"; empty string gives no occluders.
std::vector<OccluderSpan> parse_occluder_script(const std::string& text);
std::string format_occluder_script(const std::vector<OccluderSpan>& spans);

/// A rendered-on-demand synthetic sequence: textured target moving over a static
/// noise background, with scripted occluders. Boxes and visibility are exact.
class SyntheticScene {
 public:
  SyntheticScene(const SynthConfig& config, std::uint64_t seed);

  int length() const noexcept { return config_.length; }
  const std::vector<BoundingBox>& boxes() const noexcept { return boxes_; }
  const std::vector<double>& visibility() const noexcept { return visibility_; }
  const SynthConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Image render(int frame) const;
  Sequence to_sequence(const std::string& name) const;

 private:
  struct Patch {
    double u0, v0, u1, v1;  // normalized target coordinates
    std::array<float, 3> color;
  };
  struct Blob {
    double cx, cy, rx, ry;
    std::array<float, 3> color;
  };
  struct Rect {
    double x0, y0, x1, y1;
    bool contains(double px, double py) const { return px >= x0 && px < x1 && py >= y0 && py < y1; }
  };

  void build_motion(Rng& rng);
  void build_occluders();
  void compute_visibility();
  bool target_covers(int frame, double px, double py) const;
  std::array<float, 3> target_color(int frame, double px, double py) const;
  const Rect* occluder_at(int frame, double px, double py) const;

  SynthConfig config_;
  std::uint64_t seed_;
  std::vector<BoundingBox> boxes_;
  std::vector<double> visibility_;
  std::vector<std::pair<int, Rect>> occluder_rects_;  // (span index, rect)
  std::vector<std::array<float, 3>> occluder_colors_;
  std::vector<float> background_;  // H x W x 3
  std::array<float, 3> target_base_{};
  std::vector<Patch> target_patches_;
};

/// Equivalent to SyntheticScene(config, seed).to_sequence(...).
Sequence generate_synthetic(const SynthConfig& config, std::uint64_t seed);

}  // namespace haft
