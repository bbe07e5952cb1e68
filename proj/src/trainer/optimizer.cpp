#include "wisa/trainer/optimizer.hpp"

#include <cmath>

#include "wisa/errors.hpp"

namespace wisa::trainer {

Adam::Adam(numcore::ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw UsageError("Adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam: betas must lie in [0, 1)");
}

void Adam::step(const std::vector<numcore::Tensor>& grads) {
  auto& params = *params_;
  if (grads.size() != params.size()) throw DimensionError("Adam: one gradient per parameter expected");
  m_.resize(params.size());
  v_.resize(params.size());
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    const auto& g = grads[i];
    if (g.shape() != p.value.shape()) throw DimensionError("Adam: gradient shape mismatch for " + p.name);
    if (m_[i].empty()) {
      m_[i] = numcore::Tensor(p.value.shape(), 0.0);
      v_[i] = numcore::Tensor(p.value.shape(), 0.0);
    }
    auto w = p.value.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto gd = g.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gd[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gd[k] * gd[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

}  // namespace wisa::trainer
