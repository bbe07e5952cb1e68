#include "wisa/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "wisa/errors.hpp"

namespace wisa::numcore {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var y = f(tape, tape.constant(x));
  return y.value().item();
}

}  // namespace

GradCheckReport compare_gradient(const ScalarFn& f, const Tensor& x, const Tensor& claimed_grad,
                                 const GradCheckOptions& opts) {
  if (opts.step <= 0.0) throw UsageError("finite_diff_check: step must be positive");
  if (claimed_grad.shape() != x.shape()) {
    throw DimensionError("gradient shape " + shape_to_string(claimed_grad.shape()) + " does not match input " +
                         shape_to_string(x.shape()));
  }
  const double first = evaluate(f, x);
  const double second = evaluate(f, x);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw DeterminismError("finite_diff_check: repeated evaluation differs (" + std::to_string(first) + " vs " +
                           std::to_string(second) + ")");
  }

  std::vector<std::size_t> indices;
  if (opts.indices) {
    indices = *opts.indices;
  } else {
    indices.resize(x.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }

  GradCheckReport report;
  report.autodiff_grad = claimed_grad;
  report.numeric_grad = Tensor(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t idx : indices) {
    if (idx >= x.size()) throw DimensionError("finite_diff_check: index out of range");
    const double orig = probe[idx];
    const auto at = [&](double offset) {
      probe[idx] = orig + offset;
      return evaluate(f, probe);
    };
    const double h = opts.step;
    // Five-point central stencil: truncation error O(h^4).
    const double numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
    probe[idx] = orig;
    report.numeric_grad[idx] = numeric;
    const double a = claimed_grad[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = idx;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& opts) {
  Tape tape;
  Var leaf = tape.leaf(x);
  Var y = f(tape, leaf);
  if (y.value().size() != 1) throw DimensionError("finite_diff_check: f must return a scalar");
  tape.backward(y);
  return compare_gradient(f, x, tape.grad(leaf), opts);
}

}  // namespace wisa::numcore
