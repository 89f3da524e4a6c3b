#include "haft/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "haft/errors.hpp"

namespace haft {
namespace {

cv::Mat as_mat(Image& image) { return cv::Mat(image.height, image.width, CV_32FC3, image.pixels.data()); }

cv::Mat as_mat(const Image& image) {
  return cv::Mat(image.height, image.width, CV_32FC3, const_cast<float*>(image.pixels.data()));
}

}  // namespace

std::array<double, 3> Image::channel_mean() const {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (n == 0) return mean;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) mean[c] += pixels[i * 3 + c];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image image(rgb.rows, rgb.cols);
  rgb.convertTo(as_mat(image), CV_32FC3, 1.0 / 255.0);
  return image;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  cv::Mat rgb8;
  as_mat(image).convertTo(rgb8, CV_8UC3, 255.0);  // saturating, rounds to nearest
  cv::Mat bgr;
  cv::cvtColor(rgb8, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  cv::flip(as_mat(image), as_mat(out), 1);
  return out;
}

Image rotate(const Image& image, double degrees, const std::array<double, 3>& fill) {
  Image out(image.height, image.width);
  const cv::Point2f center(0.5f * static_cast<float>(image.width - 1), 0.5f * static_cast<float>(image.height - 1));
  const cv::Mat m = cv::getRotationMatrix2D(center, degrees, 1.0);
  cv::warpAffine(as_mat(image), as_mat(out), m, cv::Size(image.width, image.height), cv::INTER_LINEAR,
                 cv::BORDER_CONSTANT, cv::Scalar(fill[0], fill[1], fill[2]));
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  Image out(image.height, image.width);
  cv::GaussianBlur(as_mat(image), as_mat(out), cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
  return out;
}

}  // namespace haft
