#include "wisa/mopa/mopa.hpp"

#include <cmath>
#include <string>

#include "wisa/errors.hpp"
#include "wisa/numcore/ops.hpp"

namespace wisa::mopa {

namespace nc = numcore;

GatingVector perturb(const GatingVector& gate, double prob, Rng& rng, PerturbMode mode) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw UsageError("perturb: probability must lie in [0, 1]");
  for (double v : gate.values) {
    if (v != 0.0 && v != 1.0) throw UsageError("perturb: gate entries must be 0 or 1");
  }
  GatingVector out = gate;
  const auto flip = [](double v) { return v == 1.0 ? kDampenedGate : kPromotedGate; };
  if (mode == PerturbMode::PerSample) {
    if (rng.bernoulli(prob)) {
      for (auto& v : out.values) v = flip(v);
    }
    return out;
  }
  for (auto& v : out.values) {
    if (rng.bernoulli(prob)) v = flip(v);
  }
  return out;
}

MoPAWeights MoPAWeights::random(std::size_t model_dim, std::size_t head_dim, Rng& rng) {
  if (model_dim == 0 || head_dim == 0) throw UsageError("MoPAWeights: zero dimension");
  MoPAWeights w;
  w.head_dim = head_dim;
  const std::size_t width = kNumCategories * head_dim;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(model_dim));
  const double out_std = 1.0 / std::sqrt(static_cast<double>(width));
  w.wq = rng.normal_tensor({model_dim, width}, in_std);
  w.wk = rng.normal_tensor({model_dim, width}, in_std);
  w.wv = rng.normal_tensor({model_dim, width}, in_std);
  w.bq = Tensor({width});
  w.bk = Tensor({width});
  w.bv = Tensor({width});
  w.wo = rng.normal_tensor({width, model_dim}, out_std);
  return w;
}

MoPAVars bind(nc::Tape& tape, const MoPAWeights& w, bool trainable) {
  const auto reg = [&](const Tensor& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
  return {reg(w.wq), reg(w.bq), reg(w.wk), reg(w.bk), reg(w.wv), reg(w.bv), reg(w.wo)};
}

Tensor expand_gate(const GatingVector& gate, std::size_t head_dim) {
  Tensor out({kNumCategories * head_dim});
  for (std::size_t h = 0; h < kNumCategories; ++h)
    for (std::size_t j = 0; j < head_dim; ++j) out[h * head_dim + j] = gate[h];
  return out;
}

namespace {

std::size_t check_shapes(const nc::Shape& f, const nc::Shape& wq, const nc::Shape& wk, const nc::Shape& wv,
                         const nc::Shape& wo) {
  const auto fail = [&](const std::string& what) {
    throw DimensionError("mopa: " + what + " (f " + nc::shape_to_string(f) + ", wq " + nc::shape_to_string(wq) +
                         ", wo " + nc::shape_to_string(wo) + ")");
  };
  if (f.size() != 2 || wq.size() != 2) fail("expected rank-2 feature and weights");
  if (wq[0] != f[1]) fail("feature width does not match the projection input");
  if (wq[1] % kNumCategories != 0) fail("projection width is not a multiple of the head count");
  if (wk != wq || wv != wq) fail("q/k/v projections differ in shape");
  if (wo.size() != 2 || wo[0] != wq[1]) fail("output map does not match the head width");
  return wq[1] / kNumCategories;
}

void check_gate(const GatingVector& gate) {
  for (double v : gate.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("mopa: gate entries must lie in [0, 1]");
  }
}

}  // namespace

Var mopa_head_outputs(Var f, const MoPAVars& w) {
  check_shapes(f.shape(), w.wq.shape(), w.wk.shape(), w.wv.shape(), w.wo.shape());
  Var q = nc::linear(f, w.wq, w.bq);
  Var k = nc::linear(f, w.wk, w.bk);
  Var v = nc::linear(f, w.wv, w.bv);
  return nc::multi_head_attention(q, k, v, kNumCategories);
}

Var mopa_forward(Var f, const GatingVector& gate, const MoPAVars& w) {
  check_gate(gate);
  const std::size_t head_dim = check_shapes(f.shape(), w.wq.shape(), w.wk.shape(), w.wv.shape(), w.wo.shape());
  Var heads = mopa_head_outputs(f, w);
  Var gated = nc::mul_row(heads, f.tape().constant(expand_gate(gate, head_dim)));
  return nc::matmul(gated, w.wo);
}

Tensor mopa_forward(const Tensor& f, const GatingVector& gate, const MoPAWeights& w) {
  nc::Tape tape;
  Var out = mopa_forward(tape.constant(f), gate, bind(tape, w, false));
  return out.value();
}

std::vector<Tensor> attention_maps(const Tensor& f, const MoPAWeights& w) {
  check_shapes(f.shape(), w.wq.shape(), w.wk.shape(), w.wv.shape(), w.wo.shape());
  nc::Tape tape;
  Var fv = tape.constant(f);
  Var q = nc::linear(fv, tape.constant(w.wq), tape.constant(w.bq));
  Var k = nc::linear(fv, tape.constant(w.wk), tape.constant(w.bk));
  return nc::attention_probabilities(q.value(), k.value(), kNumCategories);
}

}  // namespace wisa::mopa
