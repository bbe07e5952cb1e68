#include "wisa/trainer/loss.hpp"

#include <cmath>
#include <string>

#include "wisa/errors.hpp"
#include "wisa/numcore/ops.hpp"

namespace wisa::trainer {

namespace nc = numcore;

Var combined_loss(Var l_diffusion, Var l_pc, double lambda) {
  if (l_diffusion.value().size() != 1 || l_pc.value().size() != 1)
    throw DimensionError("combined_loss expects scalar losses");
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be nonnegative");
  const double v = l_pc.value()[0];
  if (v < 0.0) throw ContractError("combined_loss: l_pc = " + std::to_string(v) + " is negative");
  const Var denom = nc::add_scalar(nc::stop_gradient(l_pc), 1.0);
  return nc::add(l_diffusion, nc::scale(nc::div(l_pc, denom), lambda));
}

LossBundle combine(Var l_diffusion, Var l_pc, double lambda) {
  return {l_diffusion, l_pc, lambda, combined_loss(l_diffusion, l_pc, lambda)};
}

}  // namespace wisa::trainer
