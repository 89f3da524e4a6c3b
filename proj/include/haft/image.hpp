#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace haft {

/// Interleaved RGB image (H x W x 3), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  std::array<double, 3> channel_mean() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Reads PNG/JPEG as RGB in [0, 1]. Throws DataError on failure.
Image read_image(const std::filesystem::path& path);
/// Writes 8-bit RGB; values are clamped to [0, 1] and rounded.
void write_image(const std::filesystem::path& path, const Image& image);

Image flip_horizontal(const Image& image);
/// Rotation about the image center; uncovered pixels take `fill`.
Image rotate(const Image& image, double degrees, const std::array<double, 3>& fill);
Image gaussian_blur(const Image& image, double sigma);

}  // namespace haft
