#pragma once

#include "haft/nn/autograd.hpp"

namespace haft {

/// Maps feature cells to patch pixels: pixel = offset + stride * cell.
struct FeatureGeometry {
  double stride = 8.0;
  double offset = 0.5;

  double to_pixel(double cell) const noexcept { return offset + stride * cell; }
  double to_cell(double pixel) const noexcept { return (pixel - offset) / stride; }
};

/// Dense [B,C,h,w] embedding of one or more patches (B = 1 outside batched training).
struct FeatureMap {
  nn::Var values;
  FeatureGeometry geometry;

  int batch() const { return values.dim(0); }
  int channels() const { return values.dim(1); }
  int height() const { return values.dim(2); }
  int width() const { return values.dim(3); }

  FeatureMap detached() const { return {values.detach(), geometry}; }
  /// Single item of a batch, still attached to the graph.
  FeatureMap item(int index) const { return {nn::gather(values, {index}), geometry}; }
};

}  // namespace haft
