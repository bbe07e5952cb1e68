#pragma once

#include <string>
#include <vector>

#include "wisa/backbone/model.hpp"

namespace wisa::testing {

// 2 frames of 4x4, patches 1x2x2 -> 8 tokens of 4 values.
inline backbone::ToyDiTConfig tiny_config() {
  backbone::ToyDiTConfig c;
  c.frames = 2;
  c.height = 4;
  c.width = 4;
  c.patch_frames = 1;
  c.patch_height = 2;
  c.patch_width = 2;
  c.model_dim = 8;
  c.n_heads = 2;
  c.n_blocks = 2;
  c.mlp_ratio = 2;
  c.time_freq_dim = 4;
  c.diffusion_steps = 50;
  c.max_text_len = 16;
  c.phys_head_dim = 1;
  c.quant_width = 3;
  return c;
}

inline std::vector<std::string> tiny_corpus() {
  return {"a ball bounces on the floor", "a pendulum swings slowly", "ice melts in the sun"};
}

// Replace every all-zero parameter (AdaLN of the module, adapter B, classifier, biases) by noise.
inline void fill_zero_parameters(numcore::ParameterSet& params, numcore::Rng& rng, double stddev = 0.3) {
  for (auto& p : params) {
    bool zero = true;
    for (double v : p.value.data()) zero = zero && v == 0.0;
    if (zero) p.value = rng.normal_tensor(p.value.shape(), stddev);
  }
}

inline backbone::Conditioning tiny_conditioning(const backbone::ToyDiT& model, numcore::Rng& rng) {
  backbone::Conditioning c;
  c.text = backbone::concat_conditioning(model.vocab(), "a ball bounces", "the pendulum swings", 16);
  for (auto& v : c.gate.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  c.quant = physchema::QuantitativeProperties::from_values(1200.0, 0.2, 3.5, 15.0, 40.0);
  return c;
}

}  // namespace wisa::testing
