#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "wisa/numcore/tape.hpp"
#include "wisa/numcore/tensor.hpp"

namespace wisa::numcore {

// Builds a scalar on `tape` from the leaf `x`.
using ScalarFn = std::function<Var(Tape& tape, Var x)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
  Tensor autodiff_grad;
  Tensor numeric_grad;  // entries outside the checked subset are left at zero
};

struct GradCheckOptions {
  double step = 1e-4;
  double tol = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Checked entries; all of them when unset.
  std::optional<std::vector<std::size_t>> indices;
};

/// Compares the tape gradient of f at x with central differences.
///
/// f is evaluated twice at x first; a bitwise mismatch raises DeterminismError.
GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& opts = {});

// Same comparison against a caller-supplied gradient (used as a negative control).
GradCheckReport compare_gradient(const ScalarFn& f, const Tensor& x, const Tensor& claimed_grad,
                                 const GradCheckOptions& opts = {});

}  // namespace wisa::numcore
