#pragma once

#include <string>

namespace haft {

/// Axis-aligned box in pixel coordinates; (x, y) is the top-left corner.
/// Boxes may extend beyond the image.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  static BoundingBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  double center_x() const noexcept { return x + 0.5 * w; }
  double center_y() const noexcept { return y + 0.5 * h; }
  double area() const noexcept { return w * h; }
  /// Positive size and finite coordinates.
  bool valid() const noexcept;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

std::string to_string(const BoundingBox& box);

/// Intersection over union; 0 for disjoint boxes.
double box_iou(const BoundingBox& a, const BoundingBox& b);

/// Euclidean distance between box centers.
double center_distance(const BoundingBox& a, const BoundingBox& b);

}  // namespace haft
