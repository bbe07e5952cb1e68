#pragma once

#include <cstddef>
#include <vector>

#include "wisa/numcore/tensor.hpp"

namespace wisa::backbone {

using numcore::Tensor;

/// Variance-preserving DDPM schedule over timesteps 0..T-1.
///
/// alpha_bar[t] = prod_{s <= t} (1 - beta[s]).
class NoiseSchedule {
 public:
  // Linear betas from 0.1 / T to 20 / T (the 1000-step 1e-4..0.02 range rescaled), capped at 0.999.
  static NoiseSchedule linear(std::size_t steps);
  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t); }
  const std::vector<double>& betas() const { return betas_; }

  // sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps.
  Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps) const;

  /// Schedule restricted to `count` evenly spaced timesteps, ending at T-1.
  /// betas are recomputed so the alpha_bar values at the kept steps are unchanged.
  struct Respaced {
    std::vector<std::size_t> timesteps;  // original indices, ascending
    std::vector<double> betas;
    std::vector<double> alpha_bars;
  };
  Respaced respace(std::size_t count) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct PosteriorStep {
  Tensor mean;
  double stddev = 0.0;
};

/// Ancestral step from x_t given predicted noise:
///   mean = (x_t - beta / sqrt(1 - alpha_bar) * eps) / sqrt(1 - beta)
///   var  = beta * (1 - alpha_bar_prev) / (1 - alpha_bar)
/// alpha_bar_prev is 1 at the first step, which makes the variance zero.
PosteriorStep posterior_step(const Tensor& x_t, const Tensor& eps_pred, double beta, double alpha_bar,
                             double alpha_bar_prev);

}  // namespace wisa::backbone
