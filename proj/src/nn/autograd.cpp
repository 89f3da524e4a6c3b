#include "haft/nn/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "haft/errors.hpp"

namespace haft::nn {
namespace {

thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

Var make_result(Tensor value, std::initializer_list<const Var*> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return Var(node);
  bool needs_grad = false;
  for (const Var* v : inputs) needs_grad = needs_grad || (v->defined() && v->requires_grad());
  if (!needs_grad) return Var(node);
  node->requires_grad = true;
  for (const Var* v : inputs) node->parents.push_back(v->defined() ? v->node() : nullptr);
  node->backward = std::move(backward);
  return Var(node);
}

bool wants(const std::shared_ptr<Node>& p) { return p && p->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(std::move(out), {&x}, [deriv](Node& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    Tensor& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p->value[i], self.value[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Var Var::detach() const { return Var(node_->value, false); }

void Var::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() without seed requires a single-element output");
  backward(Tensor(node_->value.shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  if (seed.shape() != node_->value.shape()) throw ShapeError("backward seed shape mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  axpy(1.0, seed, node_->grad_buffer());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
    }
  }
}

Var parameter(Tensor value) { return Var(std::move(value), true); }

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  axpy(1.0, b.value(), out);
  return make_result(std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (wants(p)) axpy(1.0, self.grad, p->grad_buffer());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  axpy(-1.0, b.value(), out);
  return make_result(std::move(out), {&a, &b}, [](Node& self) {
    if (wants(self.parents[0])) axpy(1.0, self.grad, self.parents[0]->grad_buffer());
    if (wants(self.parents[1])) axpy(-1.0, self.grad, self.parents[1]->grad_buffer());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {&a, &b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa)) {
      Tensor& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (wants(pb)) {
      Tensor& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var affine(const Var& x, double scale, double shift) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x.value()[i] + shift;
  return make_result(std::move(out), {&x}, [scale](Node& self) {
    if (wants(self.parents[0])) axpy(scale, self.grad, self.parents[0]->grad_buffer());
  });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {&x}, [](Node& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    Tensor& g = p->grad_buffer();
    const double seed = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;
  });
}

Var mean(const Var& x) {
  if (x.value().empty()) throw ShapeError("mean of empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_squares(const Var& x) {
  return make_result(Tensor::scalar(squared_norm(x.value())), {&x}, [](Node& self) {
    auto& p = self.parents[0];
    if (wants(p)) axpy(2.0 * self.grad[0], p->value, p->grad_buffer());
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of no tensors");
  const Shape& first = parts.front().shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat shape mismatch " + shape_string(s) + " vs " + shape_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= first[d];

  Tensor out(out_shape);
  const std::size_t out_block = static_cast<std::size_t>(out_shape[axis]) * inner;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = static_cast<std::size_t>(p.shape()[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().data() + o * block, block, out.data() + o * out_block + offset);
    }
    offset += block;
  }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  bool needs = grad_enabled() && std::any_of(parts.begin(), parts.end(), [](const Var& v) { return v.requires_grad(); });
  if (!needs) return Var(node);
  node->requires_grad = true;
  for (const Var& p : parts) node->parents.push_back(p.node());
  node->backward = [outer, out_block, offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!wants(p)) continue;
      Tensor& g = p->grad_buffer();
      const std::size_t block = g.size() / outer;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = self.grad.data() + o * out_block + offsets[i];
        double* dst = g.data() + o * block;
        for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
      }
    }
  };
  return Var(node);
}

Var gather(const Var& x, const std::vector<int>& indices) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("gather on rank-0 tensor");
  const std::size_t row = x.value().size() / static_cast<std::size_t>(s[0]);
  Shape out_shape = s;
  out_shape[0] = static_cast<int>(indices.size());
  Tensor out(out_shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= s[0]) throw ShapeError("gather index out of range");
    std::copy_n(x.value().data() + indices[i] * row, row, out.data() + i * row);
  }
  return make_result(std::move(out), {&x}, [indices, row](Node& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    Tensor& g = p->grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double* src = self.grad.data() + i * row;
      double* dst = g.data() + static_cast<std::size_t>(indices[i]) * row;
      for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {&x}, [](Node& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    Tensor& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, const kernels::ConvSpec& spec) {
  static const Tensor kNoBias;
  Tensor out = kernels::conv2d_forward(x.value(), w.value(), bias.defined() ? bias.value() : kNoBias, spec);
  return make_result(std::move(out), {&x, &w, &bias}, [spec](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    if (wants(pw) || wants(pb)) {
      Tensor scratch_w;
      Tensor* gw = nullptr;
      if (wants(pw)) {
        gw = &pw->grad_buffer();
      } else {
        scratch_w = Tensor(pw->value.shape());
        gw = &scratch_w;
      }
      Tensor* gb = wants(pb) ? &pb->grad_buffer() : nullptr;
      kernels::conv2d_backward_weight(px->value, self.grad, spec, pw->value.dim(2), *gw, gb);
    }
    if (wants(px)) kernels::conv2d_backward_input(pw->value, self.grad, spec, px->grad_buffer());
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
               const BatchNormOptions& options) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("batch_norm expects [N,C,H,W]");
  const int n = s[0], c = s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  if (gamma.value().size() != static_cast<std::size_t>(c) || beta.value().size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm affine parameters do not match channel count");
  }

  struct Saved {
    Tensor xhat;
    std::vector<double> inv_std;
    bool training;
  };
  auto saved = std::make_shared<Saved>();
  saved->xhat = Tensor(s);
  saved->inv_std.resize(c);
  saved->training = options.training;
  Tensor out(s);
  const Tensor& in = x.value();

  for (int ch = 0; ch < c; ++ch) {
    double mu = 0.0;
    double var = 0.0;
    if (options.training) {
      for (int b = 0; b < n; ++b) {
        const double* p = in.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) mu += p[i];
      }
      mu /= static_cast<double>(count);
      for (int b = 0; b < n; ++b) {
        const double* p = in.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      running_mean[ch] = (1.0 - options.momentum) * running_mean[ch] + options.momentum * mu;
      running_var[ch] = (1.0 - options.momentum) * running_var[ch] + options.momentum * unbiased;
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + options.eps);
    saved->inv_std[ch] = inv_std;
    const double g = gamma.value()[ch];
    const double bt = beta.value()[ch];
    for (int b = 0; b < n; ++b) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (in[base + i] - mu) * inv_std;
        saved->xhat[base + i] = xh;
        out[base + i] = g * xh + bt;
      }
    }
  }

  return make_result(std::move(out), {&x, &gamma, &beta}, [saved, n, c, plane, count](Node& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const Tensor& gy = self.grad;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += gy[base + i];
          sum_dy_xhat += gy[base + i] * saved->xhat[base + i];
        }
      }
      if (wants(pg)) pg->grad_buffer()[ch] += sum_dy_xhat;
      if (wants(pb)) pb->grad_buffer()[ch] += sum_dy;
      if (!wants(px)) continue;
      const double g = pg->value[ch];
      const double inv_std = saved->inv_std[ch];
      Tensor& gx = px->grad_buffer();
      const double m = static_cast<double>(count);
      for (int b = 0; b < n; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          if (saved->training) {
            gx[base + i] += g * inv_std / m * (m * gy[base + i] - sum_dy - saved->xhat[base + i] * sum_dy_xhat);
          } else {
            gx[base + i] += g * inv_std * gy[base + i];
          }
        }
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("global_avg_pool expects [N,C,H,W]");
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const std::size_t rows = static_cast<std::size_t>(s[0]) * s[1];
  Tensor out({s[0], s[1]});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* p = x.value().data() + r * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[r] = acc / static_cast<double>(plane);
  }
  return make_result(std::move(out), {&x}, [plane, rows](Node& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    Tensor& g = p->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = self.grad[r] / static_cast<double>(plane);
      double* dst = g.data() + r * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1]) {
    throw ShapeError("linear: incompatible shapes " + shape_string(xs) + " and " + shape_string(ws));
  }
  const int n = xs[0], d = xs[1], o = ws[0];
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(o)) throw ShapeError("linear bias mismatch");
  Tensor out({n, o});
  RowMap(out.data(), n, o).noalias() = ConstRowMap(x.value().data(), n, d) * ConstRowMap(w.value().data(), o, d).transpose();
  if (bias.defined()) {
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < o; ++j) out[static_cast<std::size_t>(r) * o + j] += bias.value()[j];
    }
  }
  return make_result(std::move(out), {&x, &w, &bias}, [n, d, o](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    const ConstRowMap gy(self.grad.data(), n, o);
    if (wants(px)) RowMap(px->grad_buffer().data(), n, d).noalias() += gy * ConstRowMap(pw->value.data(), o, d);
    if (wants(pw)) RowMap(pw->grad_buffer().data(), o, d).noalias() += gy.transpose() * ConstRowMap(px->value.data(), n, d);
    if (wants(pb)) {
      Tensor& gb = pb->grad_buffer();
      for (int r = 0; r < n; ++r) {
        for (int j = 0; j < o; ++j) gb[j] += self.grad[static_cast<std::size_t>(r) * o + j];
      }
    }
  });
}

Var roi_bilinear_pool(const Var& feature, const Var& box, const SamplingGrid& grid) {
  const Shape& fs = feature.shape();
  int c = 0, h = 0, w = 0;
  if (fs.size() == 4 && fs[0] == 1) {
    c = fs[1], h = fs[2], w = fs[3];
  } else if (fs.size() == 3) {
    c = fs[0], h = fs[1], w = fs[2];
  } else {
    throw ShapeError("roi_bilinear_pool expects a single [C,H,W] map, got " + shape_string(fs));
  }
  if (box.value().size() != 4) throw ShapeError("roi_bilinear_pool expects a 4-element box");
  const int k = grid.size;
  const double bx = box.value()[0], by = box.value()[1], bw = box.value()[2], bh = box.value()[3];
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  const int sub = grid.samples_per_bin;
  if (k < 1 || sub < 1) throw ShapeError("roi_bilinear_pool needs positive grid and sample counts");
  const double share = 1.0 / (static_cast<double>(sub) * sub);
  struct Sample {
    double fx, fy;
    double ux, uy;  // d(fx)/d(box w), d(fy)/d(box h)
    std::size_t bin;
  };
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(k) * k * sub * sub);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      for (int a = 0; a < sub; ++a) {
        for (int b = 0; b < sub; ++b) {
          const double tx = (j + (b + 0.5) / sub) / k;
          const double ty = (i + (a + 0.5) / sub) / k;
          samples.push_back({(bx + tx * bw - grid.offset) / grid.stride, (by + ty * bh - grid.offset) / grid.stride,
                             tx / grid.stride, ty / grid.stride, static_cast<std::size_t>(i) * k + j});
        }
      }
    }
  }
  const std::size_t bins = static_cast<std::size_t>(k) * k;

  const Tensor& fm = feature.value();
  auto read = [&](int ch, int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return fm[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(yy) * w + xx];
  };

  Tensor out({c, k, k});
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const double x0f = std::floor(samples[s].fx), y0f = std::floor(samples[s].fy);
      const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
      const double ax = samples[s].fx - x0f, ay = samples[s].fy - y0f;
      out[static_cast<std::size_t>(ch) * bins + samples[s].bin] +=
          share * ((1 - ay) * ((1 - ax) * read(ch, y0, x0) + ax * read(ch, y0, x0 + 1)) +
                   ay * ((1 - ax) * read(ch, y0 + 1, x0) + ax * read(ch, y0 + 1, x0 + 1)));
    }
  }

  const double inv_stride = 1.0 / grid.stride;
  return make_result(std::move(out), {&feature, &box}, [samples, c, h, w, plane, bins, share, inv_stride](Node& self) {
    auto& pf = self.parents[0];
    auto& pbox = self.parents[1];
    const Tensor& fmv = pf->value;
    auto read_v = [&](int ch, int yy, int xx) -> double {
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
      return fmv[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(yy) * w + xx];
    };
    Tensor* gf = wants(pf) ? &pf->grad_buffer() : nullptr;
    auto scatter = [&](int ch, int yy, int xx, double v) {
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
      (*gf)[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(yy) * w + xx] += v;
    };
    double gbx = 0.0, gby = 0.0, gbw = 0.0, gbh = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      for (std::size_t s = 0; s < samples.size(); ++s) {
        const double g = share * self.grad[static_cast<std::size_t>(ch) * bins + samples[s].bin];
        if (g == 0.0) continue;
        const double x0f = std::floor(samples[s].fx), y0f = std::floor(samples[s].fy);
        const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
        const double ax = samples[s].fx - x0f, ay = samples[s].fy - y0f;
        if (gf) {
          scatter(ch, y0, x0, g * (1 - ay) * (1 - ax));
          scatter(ch, y0, x0 + 1, g * (1 - ay) * ax);
          scatter(ch, y0 + 1, x0, g * ay * (1 - ax));
          scatter(ch, y0 + 1, x0 + 1, g * ay * ax);
        }
        const double v00 = read_v(ch, y0, x0), v01 = read_v(ch, y0, x0 + 1);
        const double v10 = read_v(ch, y0 + 1, x0), v11 = read_v(ch, y0 + 1, x0 + 1);
        const double d_fx = (1 - ay) * (v01 - v00) + ay * (v11 - v10);
        const double d_fy = (1 - ax) * (v10 - v00) + ax * (v11 - v01);
        gbx += g * d_fx;
        gby += g * d_fy;
        gbw += g * d_fx * samples[s].ux;
        gbh += g * d_fy * samples[s].uy;
      }
    }
    if (wants(pbox)) {
      Tensor& gb = pbox->grad_buffer();
      gb[0] += gbx * inv_stride;
      gb[1] += gby * inv_stride;
      gb[2] += gbw;
      gb[3] += gbh;
    }
  });
}

}  // namespace haft::nn
