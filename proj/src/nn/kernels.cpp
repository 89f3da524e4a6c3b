#include "haft/nn/kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "haft/errors.hpp"

namespace haft::nn::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Upper bound on the im2col buffer, in doubles; larger batches are processed in chunks.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct Geometry {
  int n, ci, h, w, co, k, ho, wo;
};

Geometry geometry_of(const Shape& xs, const Shape& ws, const ConvSpec& spec) {
  if (xs.size() != 4 || ws.size() != 4) throw ShapeError("conv2d expects rank-4 input and weight");
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(xs) + " weight " + shape_string(ws));
  }
  if (ws[2] != ws[3]) throw ShapeError("conv2d expects square kernels");
  Geometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], 0, 0};
  g.ho = conv_output_size(g.h, g.k, spec);
  g.wo = conv_output_size(g.w, g.k, spec);
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d output would be empty for input " + shape_string(xs));
  return g;
}

int images_per_chunk(const Geometry& g) {
  const std::size_t per_image = static_cast<std::size_t>(g.ci) * g.k * g.k * g.ho * g.wo;
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_image, 1), 1, g.n));
}

// col is [Ci*k*k, count*Ho*Wo] for images [n0, n0+count).
void im2col(const Tensor& x, const Geometry& g, const ConvSpec& spec, int n0, int count, RowMat& col) {
  const int plane = g.ho * g.wo;
  col.resize(static_cast<Eigen::Index>(g.ci) * g.k * g.k, static_cast<Eigen::Index>(count) * plane);
  const double* src = x.data();
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col.data() + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * col.cols();
        for (int m = 0; m < count; ++m) {
          const double* img = src + (static_cast<std::size_t>(n0 + m) * g.ci + c) * g.h * g.w;
          double* out = row + static_cast<std::size_t>(m) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * spec.stride - spec.pad + ky;
            double* out_row = out + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(out_row, out_row + g.wo, 0.0);
              continue;
            }
            const double* in_row = img + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * spec.stride - spec.pad + kx;
              out_row[ox] = (ix >= 0 && ix < g.w) ? in_row[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& col, const Geometry& g, const ConvSpec& spec, int n0, int count, Tensor& x) {
  const int plane = g.ho * g.wo;
  double* dst = x.data();
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = col.data() + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * col.cols();
        for (int m = 0; m < count; ++m) {
          double* img = dst + (static_cast<std::size_t>(n0 + m) * g.ci + c) * g.h * g.w;
          const double* in = row + static_cast<std::size_t>(m) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * spec.stride - spec.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            double* out_row = img + static_cast<std::size_t>(iy) * g.w;
            const double* in_row = in + oy * g.wo;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * spec.stride - spec.pad + kx;
              if (ix >= 0 && ix < g.w) out_row[ix] += in_row[ox];
            }
          }
        }
      }
    }
  }
}

// Gathers grad_y[n0:n0+count] into [Co, count*Ho*Wo].
void gather_output_grad(const Tensor& grad_y, const Geometry& g, int n0, int count, RowMat& out) {
  const int plane = g.ho * g.wo;
  out.resize(g.co, static_cast<Eigen::Index>(count) * plane);
  for (int m = 0; m < count; ++m) {
    for (int o = 0; o < g.co; ++o) {
      const double* src = grad_y.data() + (static_cast<std::size_t>(n0 + m) * g.co + o) * plane;
      std::copy(src, src + plane, out.data() + static_cast<std::size_t>(o) * out.cols() + m * plane);
    }
  }
}

}  // namespace

int conv_output_size(int input, int kernel, const ConvSpec& spec) {
  return (input + 2 * spec.pad - kernel) / spec.stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvSpec& spec) {
  const Geometry g = geometry_of(x.shape(), w.shape(), spec);
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.co)) throw ShapeError("conv2d bias size mismatch");
  Tensor y({g.n, g.co, g.ho, g.wo});
  const int plane = g.ho * g.wo;
  const ConstRowMap wm(w.data(), g.co, static_cast<Eigen::Index>(g.ci) * g.k * g.k);
  const int chunk = images_per_chunk(g);
  RowMat col;
  RowMat out;
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int count = std::min(chunk, g.n - n0);
    im2col(x, g, spec, n0, count, col);
    out.noalias() = wm * col;
    for (int m = 0; m < count; ++m) {
      for (int o = 0; o < g.co; ++o) {
        const double* src = out.data() + static_cast<std::size_t>(o) * out.cols() + m * plane;
        double* dst = y.data() + (static_cast<std::size_t>(n0 + m) * g.co + o) * plane;
        const double b = bias.empty() ? 0.0 : bias[o];
        for (int p = 0; p < plane; ++p) dst[p] = src[p] + b;
      }
    }
  }
  return y;
}

void conv2d_backward_weight(const Tensor& x, const Tensor& grad_y, const ConvSpec& spec, int kernel, Tensor& grad_w,
                            Tensor* grad_b) {
  const Shape ws{grad_y.dim(1), x.dim(1), kernel, kernel};
  const Geometry g = geometry_of(x.shape(), ws, spec);
  if (grad_w.shape() != ws) throw ShapeError("conv2d weight gradient has wrong shape");
  RowMap gw(grad_w.data(), g.co, static_cast<Eigen::Index>(g.ci) * g.k * g.k);
  const int chunk = images_per_chunk(g);
  RowMat col;
  RowMat gy;
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int count = std::min(chunk, g.n - n0);
    im2col(x, g, spec, n0, count, col);
    gather_output_grad(grad_y, g, n0, count, gy);
    gw.noalias() += gy * col.transpose();
    if (grad_b != nullptr && !grad_b->empty()) {
      for (int o = 0; o < g.co; ++o) (*grad_b)[o] += gy.row(o).sum();
    }
  }
}

void conv2d_backward_input(const Tensor& w, const Tensor& grad_y, const ConvSpec& spec, Tensor& grad_x) {
  const Geometry g = geometry_of(grad_x.shape(), w.shape(), spec);
  const ConstRowMap wm(w.data(), g.co, static_cast<Eigen::Index>(g.ci) * g.k * g.k);
  const int chunk = images_per_chunk(g);
  RowMat gy;
  RowMat col;
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int count = std::min(chunk, g.n - n0);
    gather_output_grad(grad_y, g, n0, count, gy);
    col.noalias() = wm.transpose() * gy;
    col2im_add(col, g, spec, n0, count, grad_x);
  }
}

}  // namespace haft::nn::kernels
