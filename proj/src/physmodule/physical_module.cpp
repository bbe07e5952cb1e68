#include "wisa/physmodule/physical_module.hpp"

#include <cmath>

#include "wisa/errors.hpp"
#include "wisa/numcore/ops.hpp"

namespace wisa::physmodule {

namespace nc = numcore;

void PhysicalModuleConfig::validate() const {
  if (model_dim == 0 || head_dim == 0 || quant_width == 0 || timestep_width == 0)
    throw UsageError("physical module: zero dimension in configuration");
}

PhysicalModule PhysicalModule::create(ParameterSet& params, const PhysicalModuleConfig& config, Rng& rng,
                                      const std::string& prefix) {
  config.validate();
  PhysicalModule m;
  m.config = config;
  const std::size_t d = config.model_dim, w = config.module_width(), c = config.cond_width();
  const auto normal = [&](std::size_t in, std::size_t out) {
    return rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  };
  m.quant_w = params.add(prefix + "quant.w", rng.normal_tensor({kQuantScalars, config.quant_width}, 0.02));
  m.quant_b = params.add(prefix + "quant.b", Tensor({config.quant_width}));
  m.ada_w = params.add(prefix + "ada.w", Tensor({c, 3 * d}));
  m.ada_b = params.add(prefix + "ada.b", Tensor({3 * d}));
  m.entry_w = params.add(prefix + "entry.w", normal(d, w));
  m.entry_b = params.add(prefix + "entry.b", Tensor({w}));

  mopa::MoPAWeights mw = mopa::MoPAWeights::random(w, config.head_dim, rng);
  m.wq = params.add(prefix + "mopa.wq", std::move(mw.wq));
  m.bq = params.add(prefix + "mopa.bq", std::move(mw.bq));
  m.wk = params.add(prefix + "mopa.wk", std::move(mw.wk));
  m.bk = params.add(prefix + "mopa.bk", std::move(mw.bk));
  m.wv = params.add(prefix + "mopa.wv", std::move(mw.wv));
  m.bv = params.add(prefix + "mopa.bv", std::move(mw.bv));
  m.wo = params.add(prefix + "mopa.wo", std::move(mw.wo));

  m.exit_w = params.add(prefix + "exit.w", normal(w, d));
  m.exit_b = params.add(prefix + "exit.b", Tensor({d}));
  return m;
}

mopa::MoPAVars PhysicalModule::mopa_vars(Binding& b) const {
  return {b(wq), b(bq), b(wk), b(bk), b(wv), b(bv), b(wo)};
}

mopa::MoPAWeights PhysicalModule::mopa_weights(const ParameterSet& params) const {
  mopa::MoPAWeights w;
  w.head_dim = config.head_dim;
  w.wq = params[wq].value;
  w.bq = params[bq].value;
  w.wk = params[wk].value;
  w.bk = params[bk].value;
  w.wv = params[wv].value;
  w.bv = params[bv].value;
  w.wo = params[wo].value;
  return w;
}

std::vector<std::size_t> PhysicalModule::parameter_indices() const {
  return {quant_w, quant_b, ada_w, ada_b, entry_w, entry_b, wq, bq, wk, bk, wv, bv, wo, exit_w, exit_b};
}

Var embed_quantitative(Binding& b, const PhysicalModule& m, const physchema::QuantitativeProperties& q,
                       Var timestep_embedding) {
  const auto& cfg = m.config;
  if (timestep_embedding.shape() != nc::Shape{cfg.timestep_width})
    throw DimensionError("embed_quantitative: timestep embedding " + nc::shape_to_string(timestep_embedding.shape()) +
                         ", expected (" + std::to_string(cfg.timestep_width) + ")");
  const auto flat = q.flatten();
  Tensor x({1, kQuantScalars});
  for (std::size_t i = 0; i < kQuantScalars; ++i) x[i] = flat[i];
  Var emb = nc::reshape(nc::linear(b.tape().constant(std::move(x)), b(m.quant_w), b(m.quant_b)), {cfg.quant_width});
  const Var parts[] = {emb, timestep_embedding};
  return nc::concat(parts);
}

Var physical_module_forward(Binding& b, const PhysicalModule& m, Var f, const GatingVector& gate, Var cond,
                            ModuleTrace* trace) {
  const auto& cfg = m.config;
  const std::size_t d = cfg.model_dim;
  if (f.shape().size() != 2 || f.shape()[1] != d)
    throw DimensionError("physical module: feature " + nc::shape_to_string(f.shape()) + ", expected (N, " +
                         std::to_string(d) + ")");
  if (cond.shape() != nc::Shape{cfg.cond_width()})
    throw DimensionError("physical module: conditioning " + nc::shape_to_string(cond.shape()) + ", expected (" +
                         std::to_string(cfg.cond_width()) + ")");

  Var act = nc::reshape(nc::silu(cond), {1, cfg.cond_width()});
  Var mods = nc::reshape(nc::linear(act, b(m.ada_w), b(m.ada_b)), {3 * d});
  Var shift = nc::slice(mods, 0, d);
  Var scale = nc::slice(mods, d, d);
  Var gain = nc::slice(mods, 2 * d, d);

  Var modulated = nc::add_row(nc::mul_row(nc::layer_norm(f), nc::add_scalar(scale, 1.0)), shift);
  Var entry = nc::linear(modulated, b(m.entry_w), b(m.entry_b));
  Var mixed = mopa::mopa_forward(entry, gate, m.mopa_vars(b));
  Var branch = nc::linear(mixed, b(m.exit_w), b(m.exit_b));
  Var out = nc::add(f, nc::mul_row(branch, gain));

  if (trace) *trace = ModuleTrace{shift, scale, gain, modulated, entry, mixed, branch};
  return out;
}

Classifier Classifier::create(ParameterSet& params, std::size_t model_dim, const std::string& prefix) {
  if (model_dim == 0) throw UsageError("classifier: zero model width");
  Classifier c;
  c.w = params.add(prefix + "w", Tensor({model_dim, kNumCategories}));
  c.b = params.add(prefix + "b", Tensor({kNumCategories}));
  return c;
}

ClassifierOutput classify(Binding& b, const Classifier& c, Var f) {
  if (f.shape().size() != 2) throw DimensionError("classify: expected (N, D) tokens, got " + nc::shape_to_string(f.shape()));
  Var pooled = nc::reshape(nc::mean_rows(f), {1, f.shape()[1]});
  Var logits = nc::reshape(nc::linear(pooled, b(c.w), b(c.b)), {kNumCategories});
  return {logits, nc::sigmoid(logits)};
}

Var bce_multilabel(Var probs, std::span<const double> target) {
  if (probs.shape() != nc::Shape{target.size()})
    throw DimensionError("bce_multilabel: probabilities " + nc::shape_to_string(probs.shape()) + " vs " +
                         std::to_string(target.size()) + " targets");
  for (double t : target) {
    if (t != 0.0 && t != 1.0) throw UsageError("bce_multilabel: targets must be 0 or 1");
  }
  Tensor t({target.size()});
  for (std::size_t i = 0; i < target.size(); ++i) t[i] = target[i];
  return nc::bce_probs(probs, probs.tape().constant(std::move(t)), kBceClamp);
}

Var bce_multilabel(const ClassifierOutput& out, const GatingVector& target) {
  return bce_multilabel(out.probs, target.values);
}

Var bce_multilabel(std::span<const ClassifierOutput> outs, std::span<const GatingVector> targets) {
  if (outs.empty() || outs.size() != targets.size())
    throw UsageError("bce_multilabel: need one target per output and a nonempty batch");
  Var total = bce_multilabel(outs[0], targets[0]);
  for (std::size_t i = 1; i < outs.size(); ++i) total = nc::add(total, bce_multilabel(outs[i], targets[i]));
  return nc::scale(total, 1.0 / static_cast<double>(outs.size()));
}

}  // namespace wisa::physmodule
