#pragma once

#include <cstddef>
#include <vector>

#include "wisa/mopa/gating.hpp"
#include "wisa/numcore/random.hpp"
#include "wisa/numcore/tape.hpp"
#include "wisa/numcore/tensor.hpp"

namespace wisa::mopa {

using numcore::Rng;
using numcore::Tensor;
using numcore::Var;

// Value an active category takes when perturbed.
inline constexpr double kDampenedGate = 0.1;
// Value an inactive category takes when perturbed.
inline constexpr double kPromotedGate = 1.0;
inline constexpr double kDefaultPerturbProb = 0.2;

enum class PerturbMode {
  PerPosition,  // each entry flips independently with probability prob
  PerSample,    // one draw decides whether every entry of the vector flips
};

/// Training-time noise on a binary category gate.
///
/// A flipped entry that was 1 becomes 0.1 and one that was 0 becomes 1.0.
/// Input entries must be exactly 0 or 1 and prob must lie in [0, 1].
GatingVector perturb(const GatingVector& gate, double prob, Rng& rng, PerturbMode mode = PerturbMode::PerPosition);

/// Parameters of one MoPA layer with kNumCategories heads of width head_dim.
///
/// Projections map model_dim -> heads * head_dim; the output map goes back
/// heads * head_dim -> model_dim and has no bias, so the layer output is
/// linear in the per-head gate values.
struct MoPAWeights {
  std::size_t head_dim = 0;
  Tensor wq, bq, wk, bk, wv, bv;
  Tensor wo;

  std::size_t model_dim() const { return wq.dim(0); }
  std::size_t width() const { return kNumCategories * head_dim; }

  static MoPAWeights random(std::size_t model_dim, std::size_t head_dim, Rng& rng);
};

// The same weights registered on a tape.
struct MoPAVars {
  Var wq, bq, wk, bk, wv, bv, wo;
};

MoPAVars bind(numcore::Tape& tape, const MoPAWeights& w, bool trainable);

// Per-column gate multiplier: head j's head_dim columns carry gate[j].
Tensor expand_gate(const GatingVector& gate, std::size_t head_dim);

/// F_o = Linear(Reshape(MHSA(F) (.) gate)) for f of shape (N, model_dim).
Var mopa_forward(Var f, const GatingVector& gate, const MoPAVars& w);
Tensor mopa_forward(const Tensor& f, const GatingVector& gate, const MoPAWeights& w);

// Per-head multi-head self-attention output before gating, (N, heads * head_dim).
Var mopa_head_outputs(Var f, const MoPAVars& w);

// The kNumCategories row-stochastic (N, N) attention matrices, before value aggregation.
std::vector<Tensor> attention_maps(const Tensor& f, const MoPAWeights& w);

}  // namespace wisa::mopa
