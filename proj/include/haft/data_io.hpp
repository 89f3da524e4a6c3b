#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "haft/geometry.hpp"
#include "haft/image.hpp"
#include "haft/rng.hpp"

namespace haft {

struct Frame {
  Image pixels;
  int index = 0;
};

/// Frames with one ground-truth box each, plus optional per-frame visibility
/// (1 = fully visible).
struct Sequence {
  std::string name;
  std::vector<Frame> frames;
  std::vector<BoundingBox> boxes;
  std::optional<std::vector<double>> visibility;

  std::size_t size() const noexcept { return frames.size(); }
  /// Throws DataError when the length invariants do not hold.
  void validate() const;
};

/// Maps patch coordinates to frame coordinates: frame = offset + scale * patch.
struct CropTransform {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  BoundingBox to_frame(const BoundingBox& patch_box) const;
  BoundingBox to_patch(const BoundingBox& frame_box) const;
};

struct SamplePatch {
  Image pixels;
  BoundingBox target_box_in_patch;
  CropTransform crop_transform;
};

/// Binary mask over patch pixels.
struct OcclusionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;
  double covered_fraction = 0.0;  // of the target box area

  bool empty() const noexcept;
};

struct CropConfig {
  int patch_size = 128;
  double context_factor = 5.0;
};

/// Ranges are fractions of the reference box size.
struct JitterConfig {
  double scale_range = 0.0;  // side scaled by U(1 - r, 1 + r)
  double shift_range = 0.0;  // center moved by U(-r, r) * (w, h)
};

struct MaskConfig {
  double probability = 0.3;
  double min_coverage = 0.3;
  double max_coverage = 0.7;
};

/// Reads `frames/` (numbered .png/.jpg), `groundtruth.txt` and optional `visibility.txt`.
Sequence load_sequence(const std::filesystem::path& dir);
void save_sequence(const Sequence& sequence, const std::filesystem::path& dir);

/// Reads only `groundtruth.txt` (and `visibility.txt`); frame files are listed, not decoded.
struct SequenceIndex {
  std::string name;
  std::vector<std::filesystem::path> frame_paths;
  std::vector<BoundingBox> boxes;
  std::optional<std::vector<double>> visibility;
};
SequenceIndex index_sequence(const std::filesystem::path& dir);

BoundingBox parse_box_line(const std::string& line);

/// Square crop of side context_factor * sqrt(w * h) around the (jittered) center of
/// `ref_box`, bilinearly resampled to patch_size. Pixels outside the frame take the
/// per-channel frame mean. `target_box` (default: `ref_box`) is mapped into the patch.
SamplePatch crop_search_region(const Image& frame, const BoundingBox& ref_box, const JitterConfig& jitter,
                               const CropConfig& crop, Rng& rng,
                               const std::optional<BoundingBox>& target_box = std::nullopt);

/// With probability `config.probability`, paints a rectangle inside the target box
/// (covering a uniform fraction in [min_coverage, max_coverage] of it) with the
/// patch mean color.
std::pair<SamplePatch, OcclusionMask> apply_random_mask(const SamplePatch& patch, const MaskConfig& config, Rng& rng);

}  // namespace haft
