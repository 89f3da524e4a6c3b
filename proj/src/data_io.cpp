#include "haft/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace fs = std::filesystem;

namespace {

bool is_frame_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

long frame_number(const fs::path& p) {
  const std::string stem = p.stem().string();
  try {
    std::size_t used = 0;
    const long n = std::stol(stem, &used);
    if (used == stem.size()) return n;
  } catch (const std::exception&) {
  }
  throw DataError("frame file name is not a number: " + p.string());
}

std::vector<double> read_visibility(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      values.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw DataError("malformed visibility line '" + line + "' in " + path.string());
    }
  }
  return values;
}

// Image extended with its per-channel mean outside the frame.
float sample_or_mean(const Image& img, int y, int x, int c, const std::array<double, 3>& mean) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return static_cast<float>(mean[c]);
  return img.at(y, x, c);
}

}  // namespace

void Sequence::validate() const {
  if (frames.size() != boxes.size()) {
    throw DataError("count mismatch: " + std::to_string(frames.size()) + " frames but " +
                    std::to_string(boxes.size()) + " boxes");
  }
  if (visibility && visibility->size() != frames.size()) {
    throw DataError("count mismatch: " + std::to_string(visibility->size()) + " visibility values for " +
                    std::to_string(frames.size()) + " frames");
  }
}

BoundingBox CropTransform::to_frame(const BoundingBox& b) const {
  return {offset_x + scale * b.x, offset_y + scale * b.y, scale * b.w, scale * b.h};
}

BoundingBox CropTransform::to_patch(const BoundingBox& b) const {
  return {(b.x - offset_x) / scale, (b.y - offset_y) / scale, b.w / scale, b.h / scale};
}

bool OcclusionMask::empty() const noexcept {
  return std::none_of(cells.begin(), cells.end(), [](std::uint8_t v) { return v != 0; });
}

BoundingBox parse_box_line(const std::string& line) {
  std::string normalized = line;
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::istringstream is(normalized);
  BoundingBox box;
  if (!(is >> box.x >> box.y >> box.w >> box.h)) throw DataError("malformed ground-truth line '" + line + "'");
  std::string rest;
  if (is >> rest) throw DataError("malformed ground-truth line '" + line + "'");
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw DataError("non-positive box size in line '" + line + "'");
  if (!box.valid()) throw DataError("non-finite box in line '" + line + "'");
  return box;
}

SequenceIndex index_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a sequence directory: " + dir.string());
  const fs::path gt_path = dir / "groundtruth.txt";
  if (!fs::exists(gt_path)) throw DataError("missing ground-truth file " + gt_path.string());

  SequenceIndex index;
  index.name = dir.filename().string();
  if (index.name.empty()) index.name = dir.parent_path().filename().string();

  const fs::path frames_dir = dir / "frames";
  if (fs::is_directory(frames_dir)) {
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
      if (entry.is_regular_file() && is_frame_file(entry.path())) index.frame_paths.push_back(entry.path());
    }
  }
  std::sort(index.frame_paths.begin(), index.frame_paths.end(),
            [](const fs::path& a, const fs::path& b) { return frame_number(a) < frame_number(b); });

  std::ifstream in(gt_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    index.boxes.push_back(parse_box_line(line));
  }
  if (index.boxes.size() != index.frame_paths.size()) {
    throw DataError("count mismatch in " + dir.string() + ": " + std::to_string(index.frame_paths.size()) +
                    " frames but " + std::to_string(index.boxes.size()) + " ground-truth lines");
  }
  const fs::path vis_path = dir / "visibility.txt";
  if (fs::exists(vis_path)) {
    index.visibility = read_visibility(vis_path);
    if (index.visibility->size() != index.boxes.size()) {
      throw DataError("count mismatch in " + vis_path.string() + ": " + std::to_string(index.visibility->size()) +
                      " values for " + std::to_string(index.boxes.size()) + " frames");
    }
  }
  return index;
}

Sequence load_sequence(const fs::path& dir) {
  SequenceIndex index = index_sequence(dir);
  Sequence seq;
  seq.name = index.name;
  seq.boxes = std::move(index.boxes);
  seq.visibility = std::move(index.visibility);
  seq.frames.reserve(index.frame_paths.size());
  for (std::size_t i = 0; i < index.frame_paths.size(); ++i) {
    seq.frames.push_back({read_image(index.frame_paths[i]), static_cast<int>(i)});
  }
  seq.validate();
  return seq;
}

void save_sequence(const Sequence& sequence, const fs::path& dir) {
  sequence.validate();
  fs::create_directories(dir / "frames");
  std::ofstream gt(dir / "groundtruth.txt");
  gt << std::setprecision(17);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    std::ostringstream name;
    name << std::setw(8) << std::setfill('0') << i << ".png";
    write_image(dir / "frames" / name.str(), sequence.frames[i].pixels);
    const BoundingBox& b = sequence.boxes[i];
    gt << b.x << ',' << b.y << ',' << b.w << ',' << b.h << '\n';
  }
  if (sequence.visibility) {
    std::ofstream vis(dir / "visibility.txt");
    vis << std::setprecision(17);
    for (double v : *sequence.visibility) vis << v << '\n';
  }
}

SamplePatch crop_search_region(const Image& frame, const BoundingBox& ref_box, const JitterConfig& jitter,
                               const CropConfig& crop, Rng& rng, const std::optional<BoundingBox>& target_box) {
  if (!ref_box.valid()) throw ShapeError("degenerate reference box " + to_string(ref_box));
  if (crop.patch_size <= 0 || crop.context_factor <= 0.0) throw ShapeError("invalid crop configuration");

  double scale_jitter = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  if (jitter.scale_range > 0.0) scale_jitter = uniform(rng, 1.0 - jitter.scale_range, 1.0 + jitter.scale_range);
  if (jitter.shift_range > 0.0) {
    dx = uniform(rng, -jitter.shift_range, jitter.shift_range) * ref_box.w;
    dy = uniform(rng, -jitter.shift_range, jitter.shift_range) * ref_box.h;
  }
  const double side = crop.context_factor * std::sqrt(ref_box.w * ref_box.h) * scale_jitter;
  const double cx = ref_box.center_x() + dx;
  const double cy = ref_box.center_y() + dy;

  SamplePatch patch;
  patch.crop_transform = {side / crop.patch_size, cx - 0.5 * side, cy - 0.5 * side};
  patch.pixels = Image(crop.patch_size, crop.patch_size);
  const auto mean = frame.channel_mean();
  const CropTransform& t = patch.crop_transform;

  for (int v = 0; v < crop.patch_size; ++v) {
    // Pixel centers sit at half-integer coordinates in both frames.
    const double fy = t.offset_y + (v + 0.5) * t.scale - 0.5;
    const double y0f = std::floor(fy);
    const int y0 = static_cast<int>(y0f);
    const double ay = fy - y0f;
    for (int u = 0; u < crop.patch_size; ++u) {
      const double fx = t.offset_x + (u + 0.5) * t.scale - 0.5;
      const double x0f = std::floor(fx);
      const int x0 = static_cast<int>(x0f);
      const double ax = fx - x0f;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - ax) * sample_or_mean(frame, y0, x0, c, mean) + ax * sample_or_mean(frame, y0, x0 + 1, c, mean);
        const double bot =
            (1 - ax) * sample_or_mean(frame, y0 + 1, x0, c, mean) + ax * sample_or_mean(frame, y0 + 1, x0 + 1, c, mean);
        patch.pixels.at(v, u, c) = static_cast<float>((1 - ay) * top + ay * bot);
      }
    }
  }
  patch.target_box_in_patch = t.to_patch(target_box.value_or(ref_box));
  return patch;
}

std::pair<SamplePatch, OcclusionMask> apply_random_mask(const SamplePatch& patch, const MaskConfig& config, Rng& rng) {
  const int height = patch.pixels.height;
  const int width = patch.pixels.width;
  OcclusionMask mask;
  mask.height = height;
  mask.width = width;
  mask.cells.assign(static_cast<std::size_t>(height) * width, 0);

  const double draw = uniform(rng, 0.0, 1.0);
  if (!(draw < config.probability)) return {patch, mask};

  const BoundingBox& t = patch.target_box_in_patch;
  const double coverage = uniform(rng, config.min_coverage, config.max_coverage);
  const double width_fraction = uniform(rng, coverage, 1.0);
  const double height_fraction = coverage / width_fraction;
  const double rw = width_fraction * t.w;
  const double rh = height_fraction * t.h;
  const double rx = t.x + uniform(rng, 0.0, std::max(0.0, t.w - rw));
  const double ry = t.y + uniform(rng, 0.0, std::max(0.0, t.h - rh));

  auto inside = [](double p, double lo, double extent) { return p >= lo && p < lo + extent; };
  std::size_t marked = 0;
  for (int v = 0; v < height; ++v) {
    if (!inside(v + 0.5, ry, rh)) continue;
    for (int u = 0; u < width; ++u) {
      if (inside(u + 0.5, rx, rw)) {
        mask.cells[static_cast<std::size_t>(v) * width + u] = 1;
        ++marked;
      }
    }
  }
  if (marked == 0) {
    const int u = std::clamp(static_cast<int>(std::floor(rx + 0.5 * rw)), 0, width - 1);
    const int v = std::clamp(static_cast<int>(std::floor(ry + 0.5 * rh)), 0, height - 1);
    mask.cells[static_cast<std::size_t>(v) * width + u] = 1;
  }

  const auto mean = patch.pixels.channel_mean();
  SamplePatch out = patch;
  std::size_t target_pixels = 0;
  std::size_t covered = 0;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const bool in_target = inside(u + 0.5, t.x, t.w) && inside(v + 0.5, t.y, t.h);
      const bool masked = mask.cells[static_cast<std::size_t>(v) * width + u] != 0;
      target_pixels += in_target;
      covered += in_target && masked;
      if (masked) {
        for (int c = 0; c < 3; ++c) out.pixels.at(v, u, c) = static_cast<float>(mean[c]);
      }
    }
  }
  mask.covered_fraction = target_pixels ? static_cast<double>(covered) / static_cast<double>(target_pixels) : 0.0;
  return {std::move(out), std::move(mask)};
}

}  // namespace haft
