#include "haft/optim.hpp"

#include <cmath>

namespace haft {

Adam::Adam(nn::ParamList params, const AdamConfig& config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(nn::Tensor(p.var.shape()));
    v_.emplace_back(nn::Tensor(p.var.shape()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Var& p = params_[i].var;
    const nn::Tensor& g = p.grad();
    if (g.empty()) continue;
    nn::Tensor& w = p.mutable_value();
    nn::Tensor& m = m_[i].mutable_value();
    nn::Tensor& v = v_[i].mutable_value();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
    }
  }
}

nn::ParamList Adam::state_arrays() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + ".adam_m", m_[i], false});
    out.push_back({params_[i].name + ".adam_v", v_[i], false});
  }
  return out;
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.var.grad().empty()) total += nn::squared_norm(p.var.grad());
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      nn::Var v = p.var;
      if (v.grad().empty()) continue;
      for (double& g : v.mutable_grad().values()) g *= scale;
    }
  }
  return norm;
}

}  // namespace haft
