#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wisa/numcore/tape.hpp"
#include "wisa/numcore/tensor.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first operand; all operands must live on the same tape.
namespace wisa::numcore {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double c);

// Row broadcast: a is (N, D), b is (D).
Var add_row(Var a, Var b);
Var mul_row(Var a, Var b);

// (M, K) x (K, N) -> (M, N).
Var matmul(Var a, Var b);
// x (N, in) * w (in, out) + b (out).
Var linear(Var x, Var w, Var b);
// As above without a bias.
Var linear(Var x, Var w);

Var sigmoid(Var x);
Var silu(Var x);
Var gelu(Var x);  // tanh approximation
Var exp(Var x);
Var log(Var x);
Var square(Var x);

// Softmax over `axis`; each slice along the axis sums to 1.
Var softmax(Var x, std::size_t axis);
// Normalizes each slice along the last axis to zero mean and unit variance (no affine terms).
Var layer_norm(Var x, double eps = 1e-6);

Var sum(Var x);   // -> (1)
Var mean(Var x);  // -> (1)
// Mean squared error over all elements -> (1).
Var mse(Var a, Var b);

// (N, D) -> (D), averaging over rows.
Var mean_rows(Var x);
// Concatenation of rank-1 tensors.
Var concat(std::span<const Var> parts);
// Contiguous window [start, start + length) of a rank-1 tensor.
Var slice(Var x, std::size_t start, std::size_t length);
// Columns [start, start + length) of a rank-2 tensor.
Var slice_cols(Var x, std::size_t start, std::size_t length);
Var reshape(Var x, Shape shape);
// Rows of `table` (V, D) selected by `ids` -> (ids.size(), D).
Var gather_rows(Var table, std::span<const std::size_t> ids);

// out[i] = x[index[i]] over flat storage, reshaped to `shape`.
Var gather(Var x, std::span<const std::size_t> index, Shape shape);

// Identity in the forward pass; contributes no adjoint to x.
Var stop_gradient(Var x);

/// Multi-head scaled dot-product self-attention without masking.
///
/// q, k, v are (N, heads * head_dim); head j occupies columns
/// [j * head_dim, (j + 1) * head_dim). Returns the per-head outputs laid out
/// the same way (N, heads * head_dim), i.e. heads concatenated, not yet mixed.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads);

// The row-stochastic (N, N) attention matrix of every head, without recording anything.
std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads);

/// Multi-label binary cross-entropy on probabilities, summed over labels.
///
/// Probabilities are clamped to [clamp_eps, 1 - clamp_eps] before the logs;
/// the clamp has zero derivative outside that interval. Targets may be any
/// value in [0, 1]. Result is >= 0.
Var bce_probs(Var probs, Var targets, double clamp_eps = 1e-7);

}  // namespace wisa::numcore
