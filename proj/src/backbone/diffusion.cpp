#include "wisa/backbone/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "wisa/errors.hpp"

namespace wisa::backbone {

NoiseSchedule NoiseSchedule::linear(std::size_t steps) {
  const double t = static_cast<double>(steps);
  return linear(steps, 0.1 / t, 20.0 / t);
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw UsageError("noise schedule: steps must be positive");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = std::min(beta_start + (beta_end - beta_start) * frac, 0.999);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw UsageError("noise schedule: no steps");
  NoiseSchedule s;
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw UsageError("noise schedule: betas must lie in (0, 1)");
    prod *= 1.0 - b;
    s.alpha_bars_.push_back(prod);
  }
  s.betas_ = std::move(betas);
  return s;
}

Tensor NoiseSchedule::q_sample(const Tensor& x0, std::size_t t, const Tensor& eps) const {
  if (x0.shape() != eps.shape())
    throw DimensionError("q_sample: clip " + numcore::shape_to_string(x0.shape()) + " vs noise " +
                         numcore::shape_to_string(eps.shape()));
  const double a = std::sqrt(alpha_bar(t)), s = std::sqrt(1.0 - alpha_bar(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

NoiseSchedule::Respaced NoiseSchedule::respace(std::size_t count) const {
  const std::size_t total = steps();
  if (count == 0 || count > total)
    throw UsageError("respace: step count " + std::to_string(count) + " outside [1, " + std::to_string(total) + "]");
  Respaced r;
  for (std::size_t i = 0; i < count; ++i) {
    const double pos = count == 1 ? static_cast<double>(total - 1)
                                  : static_cast<double>(i) * static_cast<double>(total - 1) / static_cast<double>(count - 1);
    r.timesteps.push_back(static_cast<std::size_t>(std::floor(pos + 0.5)));
  }
  double prev = 1.0;
  for (std::size_t t : r.timesteps) {
    r.alpha_bars.push_back(alpha_bars_[t]);
    r.betas.push_back(1.0 - alpha_bars_[t] / prev);
    prev = alpha_bars_[t];
  }
  return r;
}

PosteriorStep posterior_step(const Tensor& x_t, const Tensor& eps_pred, double beta, double alpha_bar,
                             double alpha_bar_prev) {
  if (x_t.shape() != eps_pred.shape()) throw DimensionError("posterior_step: shape mismatch");
  PosteriorStep step;
  step.mean = Tensor(x_t.shape());
  const double coef = beta / std::sqrt(1.0 - alpha_bar);
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  for (std::size_t i = 0; i < x_t.size(); ++i) step.mean[i] = (x_t[i] - coef * eps_pred[i]) * inv;
  step.stddev = std::sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar));
  return step;
}

}  // namespace wisa::backbone
