#pragma once

#include <cstddef>
#include <vector>

#include "wisa/numcore/params.hpp"

namespace wisa::trainer {

/// Adam over the trainable entries of a ParameterSet.
class Adam {
 public:
  Adam(numcore::ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // grads[i] is the gradient of parameter i; entries of frozen parameters are ignored.
  void step(const std::vector<numcore::Tensor>& grads);
  std::size_t steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  numcore::ParameterSet* params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<numcore::Tensor> m_, v_;
};

}  // namespace wisa::trainer
