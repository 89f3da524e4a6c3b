#include "haft/localizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "haft/errors.hpp"

namespace haft {
namespace {

// Stacks memory features as [S,C,h,w].
nn::Tensor stack_features(const SampleMemory& memory) {
  const nn::Shape& s = memory.samples().front().features.shape();
  nn::Tensor out({memory.size(), s[0], s[1], s[2]});
  const std::size_t n = memory.samples().front().features.size();
  for (int i = 0; i < memory.size(); ++i) {
    const nn::Tensor& f = memory.samples()[static_cast<std::size_t>(i)].features;
    if (f.shape() != s) throw ShapeError("memory samples must share their feature shape");
    std::copy(f.data(), f.data() + n, out.data() + static_cast<std::size_t>(i) * n);
  }
  return out;
}

nn::Tensor as_kernel(const Filter& f) {
  return f.values.reshaped({1, f.channels(), f.size(), f.size()});
}

nn::kernels::ConvSpec same_spec(int k) { return {1, k / 2}; }

// Per-sample squared weights times sample weight, [S,1,h,w].
nn::Tensor residual_scales(const SampleMemory& memory, const std::vector<double>& w) {
  const nn::Tensor& first = memory.samples().front().weight;
  nn::Tensor out({memory.size(), 1, first.dim(0), first.dim(1)});
  const std::size_t n = first.size();
  for (int i = 0; i < memory.size(); ++i) {
    const nn::Tensor& rw = memory.samples()[static_cast<std::size_t>(i)].weight;
    for (std::size_t j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = w[i] * rw[j] * rw[j];
  }
  return out;
}

nn::Tensor stack_labels(const SampleMemory& memory) {
  const nn::Tensor& first = memory.samples().front().label;
  nn::Tensor out({memory.size(), 1, first.dim(0), first.dim(1)});
  const std::size_t n = first.size();
  for (int i = 0; i < memory.size(); ++i) {
    const nn::Tensor& z = memory.samples()[static_cast<std::size_t>(i)].label;
    std::copy(z.data(), z.data() + n, out.data() + static_cast<std::size_t>(i) * n);
  }
  return out;
}

double weighted_square_sum(const nn::Tensor& r, const nn::Tensor& scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += scale[i] * r[i] * r[i];
  return s;
}

// Parabolic peak offset from three samples, clamped to half a cell.
double parabola_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

LabelMap gaussian_label(double center_y, double center_x, double sigma, int height, int width) {
  if (!(sigma > 0.0)) throw ConfigError("label sigma must be positive");
  if (height <= 0 || width <= 0) throw ShapeError("label map must be non-empty");
  LabelMap label{nn::Tensor({height, width}), center_y, center_x};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const double dy = i - center_y;
      const double dx = j - center_x;
      label.values[static_cast<std::size_t>(i) * width + j] = std::exp(-(dy * dy + dx * dx) * inv);
    }
  }
  return label;
}

nn::Tensor region_weight(const LabelMap& label, double sigma, double factor) {
  const int h = label.values.dim(0);
  const int w = label.values.dim(1);
  nn::Tensor out({h, w}, 1.0);
  const double r2 = 4.0 * sigma * sigma;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double dy = i - label.center_y;
      const double dx = j - label.center_x;
      if (dy * dy + dx * dx <= r2) out[static_cast<std::size_t>(i) * w + j] = factor;
    }
  }
  return out;
}

nn::Tensor correlate(const nn::Tensor& features, const Filter& filter) {
  nn::Tensor x = features;
  if (x.rank() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("correlate expects [C,h,w] features");
  if (filter.values.rank() != 3 || filter.size() % 2 == 0) throw ShapeError("filter must be [C,k,k] with odd k");
  if (x.dim(1) != filter.channels()) {
    throw ShapeError("correlate: features have " + std::to_string(x.dim(1)) + " channels, filter " +
                     std::to_string(filter.channels()));
  }
  nn::Tensor y = nn::kernels::conv2d_forward(x, as_kernel(filter), nn::Tensor(), same_spec(filter.size()));
  return y.reshaped({x.dim(2), x.dim(3)});
}

nn::Var correlate(const nn::Var& features, const nn::Var& filter) {
  const nn::Shape& fs = filter.shape();
  if (fs.size() != 3 || fs[1] != fs[2] || fs[1] % 2 == 0) throw ShapeError("filter must be [C,k,k] with odd k");
  if (features.shape().size() != 4 || features.dim(1) != fs[0]) throw ShapeError("correlate: channel mismatch");
  return nn::conv2d(features, nn::reshape(filter, {1, fs[0], fs[1], fs[2]}), nn::Var(), same_spec(fs[1]));
}

nn::Tensor localization_residual(const nn::Tensor& response, const nn::Tensor& label, const nn::Tensor& weight) {
  if (response.shape() != label.shape() || response.shape() != weight.shape()) {
    throw ShapeError("localization_residual: shapes differ");
  }
  nn::Tensor r(response.shape());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = weight[i] * (response[i] - label[i]);
  return r;
}

SampleMemory::SampleMemory(int capacity, double decay) : capacity_(capacity), decay_(decay) {
  if (capacity < 1) throw ConfigError("memory capacity must be at least 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("memory decay must lie in (0, 1]");
}

void SampleMemory::insert(nn::Tensor features, const LabelMap& label, nn::Tensor weight) {
  if (features.rank() == 4 && features.dim(0) == 1) {
    features = features.reshaped({features.dim(1), features.dim(2), features.dim(3)});
  }
  if (features.rank() != 3) throw ShapeError("memory features must be [C,h,w]");
  if (label.values.shape() != nn::Shape{features.dim(1), features.dim(2)} || weight.shape() != label.values.shape()) {
    throw ShapeError("memory label/weight must match the feature grid");
  }
  if (!samples_.empty() && samples_.front().features.shape() != features.shape()) {
    throw ShapeError("memory samples must share their feature shape");
  }
  for (MemorySample& s : samples_) s.sample_weight *= decay_;
  MemorySample sample{std::move(features), label.values, std::move(weight), 1.0, counter_++};
  if (size() < capacity_) {
    samples_.push_back(std::move(sample));
  } else {
    auto oldest = std::min_element(samples_.begin(), samples_.end(),
                                   [](const MemorySample& a, const MemorySample& b) { return a.inserted < b.inserted; });
    *oldest = std::move(sample);
  }
}

std::vector<double> SampleMemory::normalized_weights() const {
  double total = 0.0;
  for (const MemorySample& s : samples_) total += s.sample_weight;
  std::vector<double> w;
  w.reserve(samples_.size());
  for (const MemorySample& s : samples_) w.push_back(s.sample_weight / total);
  return w;
}

double filter_objective(const SampleMemory& memory, const Filter& filter, double reg_lambda) {
  if (memory.empty()) throw ShapeError("empty sample memory");
  const nn::Tensor x = stack_features(memory);
  const nn::Tensor scale = residual_scales(memory, memory.normalized_weights());
  nn::Tensor r = nn::kernels::conv2d_forward(x, as_kernel(filter), nn::Tensor(), same_spec(filter.size()));
  nn::axpy(-1.0, stack_labels(memory), r);
  return weighted_square_sum(r, scale) + reg_lambda * nn::squared_norm(filter.values);
}

Filter learn_filter(const SampleMemory& memory, const Filter& f0, int n_iters, double reg_lambda,
                    std::vector<double>* history) {
  if (memory.empty()) throw ShapeError("learn_filter: empty sample memory");
  if (n_iters < 1) throw ConfigError("learn_filter: n_iters must be at least 1");
  if (reg_lambda < 0.0) throw ConfigError("learn_filter: reg_lambda must be non-negative");
  if (f0.channels() != memory.samples().front().features.dim(0)) throw ShapeError("learn_filter: channel mismatch");

  const nn::Tensor x = stack_features(memory);
  const nn::Tensor z = stack_labels(memory);
  const nn::Tensor scale = residual_scales(memory, memory.normalized_weights());
  const int k = f0.size();
  const nn::kernels::ConvSpec spec = same_spec(k);

  Filter f = f0;
  nn::Tensor kernel = as_kernel(f);
  nn::Tensor r = nn::kernels::conv2d_forward(x, kernel, nn::Tensor(), spec);
  nn::axpy(-1.0, z, r);
  double loss = weighted_square_sum(r, scale) + reg_lambda * nn::squared_norm(kernel);
  if (history) history->assign(1, loss);

  for (int it = 0; it < n_iters; ++it) {
    // g = 2 A^T (scale * r) + 2 lambda f
    nn::Tensor sr(r.shape());
    for (std::size_t i = 0; i < r.size(); ++i) sr[i] = 2.0 * scale[i] * r[i];
    nn::Tensor g(kernel.shape());
    nn::kernels::conv2d_backward_weight(x, sr, spec, k, g, nullptr);
    nn::axpy(2.0 * reg_lambda, kernel, g);

    const double gg = nn::squared_norm(g);
    if (gg == 0.0) {
      if (it == 0 && loss > 0.0) return f0;
      break;
    }
    const nn::Tensor ag = nn::kernels::conv2d_forward(x, g, nn::Tensor(), spec);
    const double curvature = weighted_square_sum(ag, scale) + reg_lambda * gg;
    if (!(curvature > 0.0) || !std::isfinite(curvature)) break;
    const double alpha = gg / (2.0 * curvature);

    nn::axpy(-alpha, g, kernel);
    nn::axpy(-alpha, ag, r);
    loss = weighted_square_sum(r, scale) + reg_lambda * nn::squared_norm(kernel);
    if (history) history->push_back(loss);
  }
  f.values = kernel.reshaped(f0.values.shape());
  return f;
}

nn::Var localization_loss(const std::vector<nn::Var>& responses, const std::vector<nn::Tensor>& labels,
                          const std::vector<nn::Tensor>& region_weights) {
  if (responses.empty()) throw ShapeError("localization_loss: empty lists");
  if (responses.size() != labels.size() || responses.size() != region_weights.size()) {
    throw ShapeError("localization_loss: list lengths differ");
  }
  nn::Var total;
  for (std::size_t t = 0; t < responses.size(); ++t) {
    const nn::Shape& shape = responses[t].shape();
    if (labels[t].size() != nn::shape_size(shape) || region_weights[t].size() != nn::shape_size(shape)) {
      throw ShapeError("localization_loss: response/label size mismatch");
    }
    const nn::Var w(region_weights[t].reshaped(shape));
    const nn::Var z(labels[t].reshaped(shape));
    const double n = static_cast<double>(nn::shape_size(shape));
    const nn::Var term = nn::affine(nn::sum_squares(w * (responses[t] - z)), 1.0 / n);
    total = total.defined() ? total + term : term;
  }
  return nn::affine(total, 1.0 / static_cast<double>(responses.size()));
}

Localization localize(const nn::Tensor& response, const FeatureGeometry& geometry) {
  if (response.rank() != 2 || response.empty()) throw ShapeError("localize expects a non-empty [h,w] response");
  const int h = response.dim(0);
  const int w = response.dim(1);
  std::size_t best = 0;
  for (std::size_t i = 1; i < response.size(); ++i) {
    if (response[i] > response[best]) best = i;
  }
  const int row = static_cast<int>(best) / w;
  const int col = static_cast<int>(best) % w;
  auto at = [&](int i, int j) { return response[static_cast<std::size_t>(i) * w + j]; };

  double dy = 0.0;
  double dx = 0.0;
  bool fitted = false;
  if (row > 0 && row < h - 1 && col > 0 && col < w - 1) {
    // Least-squares fit of a + b x + c y + d x^2 + e y^2 + g x y over the 3x3 neighborhood.
    Eigen::Matrix<double, 9, 6> design;
    Eigen::Matrix<double, 9, 1> values;
    int n = 0;
    for (int v = -1; v <= 1; ++v) {
      for (int u = -1; u <= 1; ++u) {
        design.row(n) << 1.0, u, v, u * u, v * v, u * v;
        values(n) = at(row + v, col + u);
        ++n;
      }
    }
    const Eigen::Matrix<double, 6, 1> c = (design.transpose() * design).ldlt().solve(design.transpose() * values);
    Eigen::Matrix2d hessian;
    hessian << 2.0 * c(3), c(5), c(5), 2.0 * c(4);
    if (hessian(0, 0) < 0.0 && hessian.determinant() > 0.0) {
      const Eigen::Vector2d offset = hessian.ldlt().solve(Eigen::Vector2d(-c(1), -c(2)));
      if (std::abs(offset(0)) <= 1.0 && std::abs(offset(1)) <= 1.0) {
        dx = offset(0);
        dy = offset(1);
        fitted = true;
      }
    }
  }
  if (!fitted) {
    if (col > 0 && col < w - 1) dx = parabola_offset(at(row, col - 1), at(row, col), at(row, col + 1));
    if (row > 0 && row < h - 1) dy = parabola_offset(at(row - 1, col), at(row, col), at(row + 1, col));
  }
  Localization out;
  out.cell_x = col + dx;
  out.cell_y = row + dy;
  out.x = geometry.to_pixel(out.cell_x);
  out.y = geometry.to_pixel(out.cell_y);
  out.confidence = response[best];
  return out;
}

}  // namespace haft
