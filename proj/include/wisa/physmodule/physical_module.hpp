#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wisa/mopa/gating.hpp"
#include "wisa/mopa/mopa.hpp"
#include "wisa/numcore/params.hpp"
#include "wisa/numcore/random.hpp"
#include "wisa/physchema/annotation.hpp"

namespace wisa::physmodule {

using mopa::GatingVector;
using numcore::Binding;
using numcore::ParameterSet;
using numcore::Rng;
using numcore::Tensor;
using numcore::Var;

struct PhysicalModuleConfig {
  std::size_t model_dim = 128;       // backbone token width
  std::size_t head_dim = 8;          // per-expert width; module width is 29 * head_dim
  std::size_t quant_width = 64;      // output of the quantitative-property linear map
  std::size_t timestep_width = 128;  // width of the backbone timestep embedding

  std::size_t module_width() const { return kNumCategories * head_dim; }
  std::size_t cond_width() const { return quant_width + timestep_width; }
  void validate() const;
};

// Number of scalars in a flattened QuantitativeProperties.
inline constexpr std::size_t kQuantScalars = 10;

/// Parameter indices of one Physical Module inside a ParameterSet.
///
/// Conditioning: [Linear(quant) ; timestep embedding] -> SiLU -> Linear -> (shift, scale, gate).
/// Branch: LN(f) * (1 + scale) + shift -> entry -> MoPA -> exit, added to f times gate.
/// The AdaLN linear starts at zero, so a fresh module is the identity.
struct PhysicalModule {
  PhysicalModuleConfig config;
  std::size_t quant_w = 0, quant_b = 0;
  std::size_t ada_w = 0, ada_b = 0;
  std::size_t entry_w = 0, entry_b = 0;
  std::size_t wq = 0, bq = 0, wk = 0, bk = 0, wv = 0, bv = 0, wo = 0;
  std::size_t exit_w = 0, exit_b = 0;

  static PhysicalModule create(ParameterSet& params, const PhysicalModuleConfig& config, Rng& rng,
                               const std::string& prefix = "phys.");

  mopa::MoPAVars mopa_vars(Binding& b) const;
  mopa::MoPAWeights mopa_weights(const ParameterSet& params) const;
  std::vector<std::size_t> parameter_indices() const;
};

/// Flattened properties through the learned map, concatenated with the timestep embedding.
/// Returns a rank-1 vector of width quant_width + timestep_width.
Var embed_quantitative(Binding& b, const PhysicalModule& m, const physchema::QuantitativeProperties& q,
                       Var timestep_embedding);

// Intermediate values of one forward pass, for inspection and tests.
struct ModuleTrace {
  Var shift, scale, gate;
  Var modulated;  // LN(f) * (1 + scale) + shift
  Var entry;      // input to MoPA, (N, module_width)
  Var mixed;      // MoPA output
  Var branch;     // after the exit projection, before the gate
};

/// f (N, model_dim) -> f + gate * exit(MoPA(entry(modulate(LN(f))))).
Var physical_module_forward(Binding& b, const PhysicalModule& m, Var f, const GatingVector& gate, Var cond,
                            ModuleTrace* trace = nullptr);

/// Mean-pooled tokens -> Linear -> 29 logits. Zero-initialized.
struct Classifier {
  std::size_t w = 0, b = 0;
  static Classifier create(ParameterSet& params, std::size_t model_dim, const std::string& prefix = "cls.");
};

struct ClassifierOutput {
  Var logits;  // (29)
  Var probs;   // sigmoid(logits)
};

ClassifierOutput classify(Binding& b, const Classifier& c, Var f);

// Probability clamp applied before the logarithms.
inline constexpr double kBceClamp = 1e-7;

/// -sum_i [t_i log p_i + (1 - t_i) log(1 - p_i)] for one sample; targets must be 0 or 1.
Var bce_multilabel(Var probs, std::span<const double> target);
Var bce_multilabel(const ClassifierOutput& out, const GatingVector& target);
// Batch mean of the per-sample loss.
Var bce_multilabel(std::span<const ClassifierOutput> outs, std::span<const GatingVector> targets);

}  // namespace wisa::physmodule
