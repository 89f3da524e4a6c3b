#include "haft/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "haft/errors.hpp"

namespace haft {
namespace {

constexpr int kMotionAttempts = 200;
constexpr double kMaxOutsideFraction = 0.2;

std::array<float, 3> random_color(Rng& rng, double lo, double hi) {
  return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
          static_cast<float>(uniform(rng, lo, hi))};
}

void validate(const SynthConfig& c) {
  if (c.length < 1) throw ConfigError("synth.length must be >= 1");
  if (c.width < 32 || c.height < 32) throw ConfigError("synthetic frames must be at least 32x32");
  if (!(c.target_min_size > 0.0) || c.target_max_size < c.target_min_size) {
    throw ConfigError("synthetic target size range is invalid");
  }
  if (c.speed_min < 0.0 || c.speed_max < c.speed_min) throw ConfigError("synthetic speed range is invalid");
  for (const OccluderSpan& s : c.occluders) {
    if (s.start_frame < 0 || s.end_frame >= c.length || s.end_frame < s.start_frame) {
      throw ConfigError("occluder interval [" + std::to_string(s.start_frame) + ", " + std::to_string(s.end_frame) +
                        "] outside sequence of length " + std::to_string(c.length));
    }
    if (!(s.max_coverage > 0.0) || s.max_coverage > 1.0) throw ConfigError("occluder coverage must be in (0, 1]");
  }
}

}  // namespace

std::vector<OccluderSpan> parse_occluder_script(const std::string& text) {
  std::vector<OccluderSpan> spans;
  std::istringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::replace(item.begin(), item.end(), ':', ' ');
    std::istringstream is(item);
    OccluderSpan span;
    if (!(is >> span.start_frame >> span.end_frame >> span.max_coverage)) {
      throw ConfigError("malformed occluder entry '" + item + "', expected start:end:coverage");
    }
    if (span.end_frame < span.start_frame || span.start_frame < 0) {
      throw ConfigError("occluder entry '" + item + "' has an empty or negative frame interval");
    }
    spans.push_back(span);
  }
  return spans;
}

std::string format_occluder_script(const std::vector<OccluderSpan>& spans) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i) os << ';';
    os << spans[i].start_frame << ':' << spans[i].end_frame << ':' << spans[i].max_coverage;
  }
  return os.str();
}

SyntheticScene::SyntheticScene(const SynthConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  validate(config_);

  Rng texture_rng = make_rng(config_.texture_seed ? config_.texture_seed : seed, "synth.texture");
  target_base_ = random_color(texture_rng, 0.05, 0.95);
  for (int i = 0; i < 5; ++i) {
    const double u0 = uniform(texture_rng, 0.0, 0.7);
    const double v0 = uniform(texture_rng, 0.0, 0.7);
    target_patches_.push_back({u0, v0, u0 + uniform(texture_rng, 0.2, 0.5), v0 + uniform(texture_rng, 0.2, 0.5),
                               random_color(texture_rng, 0.0, 1.0)});
  }

  Rng bg_rng = make_rng(seed, "synth.background");
  const int w = config_.width;
  const int h = config_.height;
  background_.assign(static_cast<std::size_t>(w) * h * 3, 0.0f);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves;
  for (auto& channel : waves) {
    for (int i = 0; i < 3; ++i) {
      channel.push_back({uniform(bg_rng, -0.15, 0.15), uniform(bg_rng, -0.15, 0.15),
                         uniform(bg_rng, 0.0, 2.0 * std::numbers::pi), uniform(bg_rng, 0.04, 0.1)});
    }
  }
  const auto base = random_color(bg_rng, 0.3, 0.7);
  std::vector<Blob> blobs;
  for (int i = 0; i < 10; ++i) {
    blobs.push_back({uniform(bg_rng, 0.0, w), uniform(bg_rng, 0.0, h), uniform(bg_rng, 4.0, 14.0),
                     uniform(bg_rng, 4.0, 14.0), random_color(bg_rng, 0.1, 0.9)});
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      std::array<double, 3> col{};
      for (int c = 0; c < 3; ++c) {
        col[c] = base[c];
        for (const Wave& wv : waves[c]) col[c] += wv.amp * std::sin(wv.kx * px + wv.ky * py + wv.phase);
      }
      for (const Blob& b : blobs) {
        const double dx = (px - b.cx) / b.rx;
        const double dy = (py - b.cy) / b.ry;
        if (dx * dx + dy * dy <= 1.0) {
          for (int c = 0; c < 3; ++c) col[c] = b.color[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        background_[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<float>(std::clamp(col[c], 0.0, 1.0));
      }
    }
  }

  Rng motion_rng = make_rng(seed, "synth.motion");
  build_motion(motion_rng);
  build_occluders();
  compute_visibility();
}

void SyntheticScene::build_motion(Rng& rng) {
  const int n = config_.length;
  const double W = config_.width;
  const double H = config_.height;
  for (int attempt = 0; attempt < kMotionAttempts; ++attempt) {
    const double w0 = uniform(rng, config_.target_min_size, config_.target_max_size);
    const double h0 = uniform(rng, config_.target_min_size, config_.target_max_size);
    const double speed = uniform(rng, config_.speed_min, config_.speed_max);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double period = uniform(rng, config_.wobble_period_min, config_.wobble_period_max);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double scale_period = uniform(rng, 30.0, 60.0);
    const double scale_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double mid_x = 0.5 * W + uniform(rng, -0.15, 0.15) * W;
    const double mid_y = 0.5 * H + uniform(rng, -0.15, 0.15) * H;
    const double vx = speed * std::cos(angle);
    const double vy = speed * std::sin(angle);

    std::vector<BoundingBox> boxes;
    boxes.reserve(n);
    int outside = 0;
    for (int t = 0; t < n; ++t) {
      const double dt = t - 0.5 * (n - 1);
      const double wob = config_.wobble_amplitude * std::sin(2.0 * std::numbers::pi * t / period + phase);
      const double cx = mid_x + vx * dt - std::sin(angle) * wob;
      const double cy = mid_y + vy * dt + std::cos(angle) * wob;
      const double s = 1.0 + config_.scale_amplitude * std::sin(2.0 * std::numbers::pi * t / scale_period + scale_phase);
      const BoundingBox b = BoundingBox::from_center(cx, cy, w0 * s, h0 * s);
      if (b.x < 0.0 || b.y < 0.0 || b.x + b.w > W || b.y + b.h > H) ++outside;
      boxes.push_back(b);
    }
    if (outside <= kMaxOutsideFraction * n) {
      boxes_ = std::move(boxes);
      return;
    }
  }
  throw DataError("synthetic target leaves the image in more than 20% of frames for every sampled motion");
}

void SyntheticScene::build_occluders() {
  Rng rng = make_rng(seed_, "synth.occluders");
  for (std::size_t i = 0; i < config_.occluders.size(); ++i) {
    const OccluderSpan& span = config_.occluders[i];
    Rect r{1e300, 1e300, -1e300, -1e300};
    double max_h = 0.0;
    for (int t = span.start_frame; t <= span.end_frame; ++t) {
      const BoundingBox& b = boxes_[t];
      r.x0 = std::min(r.x0, b.x);
      r.y0 = std::min(r.y0, b.y);
      r.x1 = std::max(r.x1, b.x + b.w);
      r.y1 = std::max(r.y1, b.y + b.h);
      max_h = std::max(max_h, b.h);
    }
    constexpr double kMargin = 1.5;
    r.x0 -= kMargin;
    r.y0 -= kMargin;
    r.x1 += kMargin;
    if (span.max_coverage >= 1.0) {
      r.y1 += kMargin;
    } else {
      r.y1 = r.y1 - max_h + span.max_coverage * max_h;
    }
    occluder_rects_.emplace_back(static_cast<int>(i), r);
    occluder_colors_.push_back(random_color(rng, 0.15, 0.85));
  }
}

const SyntheticScene::Rect* SyntheticScene::occluder_at(int frame, double px, double py) const {
  for (const auto& [span_index, rect] : occluder_rects_) {
    const OccluderSpan& span = config_.occluders[span_index];
    if (frame >= span.start_frame && frame <= span.end_frame && rect.contains(px, py)) return &rect;
  }
  return nullptr;
}

bool SyntheticScene::target_covers(int frame, double px, double py) const {
  const BoundingBox& b = boxes_[frame];
  return px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h;
}

std::array<float, 3> SyntheticScene::target_color(int frame, double px, double py) const {
  const BoundingBox& b = boxes_[frame];
  const double u = (px - b.x) / b.w;
  const double v = (py - b.y) / b.h;
  std::array<float, 3> color = target_base_;
  for (const Patch& p : target_patches_) {
    if (u >= p.u0 && u < p.u1 && v >= p.v0 && v < p.v1) color = p.color;
  }
  return color;
}

void SyntheticScene::compute_visibility() {
  visibility_.assign(config_.length, 1.0);
  for (int t = 0; t < config_.length; ++t) {
    const BoundingBox& b = boxes_[t];
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y - 0.5)));
    const int x1 = std::min(config_.width - 1, static_cast<int>(std::ceil(b.x + b.w)));
    const int y1 = std::min(config_.height - 1, static_cast<int>(std::ceil(b.y + b.h)));
    std::size_t total = 0;
    std::size_t hidden = 0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!target_covers(t, x + 0.5, y + 0.5)) continue;
        ++total;
        hidden += occluder_at(t, x + 0.5, y + 0.5) != nullptr;
      }
    }
    visibility_[t] = total ? 1.0 - static_cast<double>(hidden) / static_cast<double>(total) : 0.0;
  }
}

Image SyntheticScene::render(int frame) const {
  if (frame < 0 || frame >= config_.length) throw ShapeError("frame index out of range");
  Image image(config_.height, config_.width);
  std::copy(background_.begin(), background_.end(), image.pixels.begin());
  const BoundingBox& b = boxes_[frame];
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y - 0.5)));
  const int x1 = std::min(config_.width - 1, static_cast<int>(std::ceil(b.x + b.w)));
  const int y1 = std::min(config_.height - 1, static_cast<int>(std::ceil(b.y + b.h)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!target_covers(frame, x + 0.5, y + 0.5)) continue;
      const auto color = target_color(frame, x + 0.5, y + 0.5);
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = color[c];
    }
  }
  for (const auto& [span_index, rect] : occluder_rects_) {
    const OccluderSpan& span = config_.occluders[span_index];
    if (frame < span.start_frame || frame > span.end_frame) continue;
    const auto& color = occluder_colors_[span_index];
    const int rx0 = std::max(0, static_cast<int>(std::floor(rect.x0 - 0.5)));
    const int ry0 = std::max(0, static_cast<int>(std::floor(rect.y0 - 0.5)));
    const int rx1 = std::min(config_.width - 1, static_cast<int>(std::ceil(rect.x1)));
    const int ry1 = std::min(config_.height - 1, static_cast<int>(std::ceil(rect.y1)));
    for (int y = ry0; y <= ry1; ++y) {
      for (int x = rx0; x <= rx1; ++x) {
        if (!rect.contains(x + 0.5, y + 0.5)) continue;
        const float stripe = ((x / 4) % 2 == 0) ? 0.08f : -0.08f;
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = std::clamp(color[c] + stripe, 0.0f, 1.0f);
      }
    }
  }
  if (config_.pixel_noise > 0.0) {
    Rng noise = make_rng(seed_, "synth.noise", static_cast<std::uint64_t>(frame));
    std::normal_distribution<float> dist(0.0f, static_cast<float>(config_.pixel_noise));
    for (float& v : image.pixels) v = std::clamp(v + dist(noise), 0.0f, 1.0f);
  }
  return image;
}

Sequence SyntheticScene::to_sequence(const std::string& name) const {
  Sequence seq;
  seq.name = name;
  seq.boxes = boxes_;
  seq.visibility = visibility_;
  seq.frames.reserve(config_.length);
  for (int t = 0; t < config_.length; ++t) seq.frames.push_back({render(t), t});
  return seq;
}

Sequence generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  return SyntheticScene(config, seed).to_sequence("synthetic_" + std::to_string(seed));
}

}  // namespace haft
