#include "haft/adversary.hpp"

#include "haft/errors.hpp"

namespace haft {

DiscriminatorParams::DiscriminatorParams(const DiscriminatorConfig& config, Rng& rng) : config_(config) {
  constexpr std::array<int, 3> strides{2, 2, 1};
  int in = 2 * config.input_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    convs_[i] = nn::Conv2d(in, config.width, 3, strides[i], 1, rng, 1.0, false);
    norms_[i] = nn::BatchNorm2d(config.width);
    in = config.width;
  }
  head_ = nn::Linear(config.width, 1, rng, 0.5);
}

void DiscriminatorParams::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < 3; ++i) {
    convs_[i].collect(out, prefix + ".conv" + std::to_string(i + 1));
    norms_[i].collect(out, prefix + ".bn" + std::to_string(i + 1));
  }
  head_.collect(out, prefix + ".head");
}

nn::Var discriminate(const DiscriminatorParams& params, const FeatureMap& condition, const FeatureMap& candidate,
                     bool training) {
  if (condition.values.shape() != candidate.values.shape()) {
    throw ShapeError("discriminate: condition " + nn::shape_string(condition.values.shape()) + " vs candidate " +
                     nn::shape_string(candidate.values.shape()));
  }
  if (condition.channels() != params.config().input_channels) throw ShapeError("discriminate: channel mismatch");
  if (!condition.values.value().all_finite() || !candidate.values.value().all_finite()) {
    throw DivergenceError("discriminate: non-finite input");
  }
  nn::Var x = nn::concat({condition.values, candidate.values}, 1);
  for (std::size_t i = 0; i < 3; ++i) x = nn::leaky_relu(params.norms()[i](params.convs()[i](x), training), 0.2);
  nn::Var logits = params.head()(nn::global_avg_pool(x));
  return nn::reshape(logits, {condition.batch()});
}

nn::Var loss_discriminator(const nn::Var& real_logits, const nn::Var& fake_logits) {
  if (real_logits.value().empty() || fake_logits.value().empty()) throw ShapeError("empty logit list");
  // -log sigma(x) = softplus(-x); -log(1 - sigma(x)) = softplus(x)
  const nn::Var real = nn::clamp(real_logits, -kLogitClamp, kLogitClamp);
  const nn::Var fake = nn::clamp(fake_logits, -kLogitClamp, kLogitClamp);
  return nn::mean(nn::softplus(nn::affine(real, -1.0))) + nn::mean(nn::softplus(fake));
}

nn::Var discriminator_objective(const DiscriminatorParams& params, const FeatureMap& condition,
                                const FeatureMap& real, const FeatureMap& fake, bool training) {
  // Real and fake pairs are normalized as separate batches.
  const FeatureMap cond = condition.detached();
  const nn::Var real_logits = discriminate(params, cond, real.detached(), training);
  const nn::Var fake_logits = discriminate(params, cond, fake.detached(), training);
  return loss_discriminator(real_logits, fake_logits);
}

nn::Var loss_generator(const nn::Var& fake_logits) {
  if (fake_logits.value().empty()) throw ShapeError("empty logit list");
  return nn::mean(nn::softplus(nn::affine(nn::clamp(fake_logits, -kLogitClamp, kLogitClamp), -1.0)));
}

nn::Var loss_reconstruction(const std::vector<FeatureMap>& etas, const std::vector<FeatureMap>& betas) {
  if (etas.size() != betas.size()) throw ShapeError("loss_reconstruction: list lengths differ");
  if (etas.empty()) throw ShapeError("loss_reconstruction: empty lists");
  nn::Var total;
  for (std::size_t k = 0; k < etas.size(); ++k) {
    if (etas[k].values.shape() != betas[k].values.shape()) throw ShapeError("loss_reconstruction: shape mismatch");
    const double n = static_cast<double>(etas[k].values.value().size());
    const nn::Var term = nn::affine(nn::sum_squares(etas[k].values - betas[k].values), 1.0 / n);
    total = total.defined() ? total + term : term;
  }
  return nn::affine(total, 1.0 / static_cast<double>(etas.size()));
}

}  // namespace haft
