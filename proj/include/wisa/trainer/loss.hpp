#pragma once

#include "wisa/numcore/tape.hpp"

namespace wisa::trainer {

using numcore::Var;

struct LossBundle {
  Var l_diffusion;
  Var l_pc;
  double lambda = 0.0;
  Var l_total;
};

/// l_diffusion + lambda * l_pc / (1 + l_pc), with the denominator held constant
/// under differentiation. Throws ContractError for l_pc < 0, UsageError for lambda < 0.
Var combined_loss(Var l_diffusion, Var l_pc, double lambda);
LossBundle combine(Var l_diffusion, Var l_pc, double lambda);

}  // namespace wisa::trainer
