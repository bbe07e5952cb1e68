#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisa/backbone/config.hpp"
#include "wisa/backbone/diffusion.hpp"
#include "wisa/backbone/text.hpp"
#include "wisa/mopa/gating.hpp"
#include "wisa/numcore/params.hpp"
#include "wisa/numcore/random.hpp"
#include "wisa/physchema/annotation.hpp"
#include "wisa/physmodule/physical_module.hpp"

namespace wisa::backbone {

using numcore::Binding;
using numcore::ParameterSet;
using numcore::Rng;
using numcore::Var;

struct Conditioning {
  TextCondition text;
  mopa::GatingVector gate = mopa::GatingVector::ones();
  physchema::QuantitativeProperties quant;
};

// Affine map with an optional low-rank delta: x W + b + scale * (x A) B.
struct LinearLayer {
  std::size_t w = 0, b = 0;
  std::optional<std::size_t> lora_a, lora_b;
  double lora_scale = 0.0;

  Var apply(Binding& bind, Var x) const;
};

struct DiTBlock {
  LinearLayer ada;  // conditioning -> 6 * model_dim modulation
  LinearLayer qkv, proj;
  LinearLayer fc1, fc2;
};

struct DenoiseResult {
  Var noise;         // (frames, height, width)
  Var block_output;  // tokens after the last transformer block
  Var feature;       // tokens after the Physical Module (== block_output without one)
  Var module_cond;   // Physical Module conditioning vector (invalid without one)
  physmodule::ModuleTrace trace;
};

struct LoraReport {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::size_t adapted_layers = 0;
  std::size_t added_parameters = 0;
  std::size_t total_parameters = 0;  // after adding
  double overhead() const {
    return static_cast<double>(added_parameters) / static_cast<double>(total_parameters - added_parameters);
  }
};

/// DiT-style denoiser over single-channel clips.
///
/// patchify -> linear embed + learned positions -> n_blocks adaLN transformer blocks
/// -> Physical Module -> adaLN final norm -> linear -> unpatchify.
/// Conditioning c = timestep embedding + pooled text embedding.
class ToyDiT {
 public:
  static ToyDiT create(const ToyDiTConfig& config, Vocabulary vocab, std::uint64_t seed);

  const ToyDiTConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  void set_schedule(NoiseSchedule s);

  bool has_physical_module() const { return config_.physical_module; }
  const physmodule::PhysicalModule& physical_module() const;
  const physmodule::Classifier& classifier() const;
  const std::vector<DiTBlock>& blocks() const { return blocks_; }

  Conditioning make_conditioning(const physchema::PhysicalAnnotation& a) const;

  DenoiseResult forward(Binding& bind, Var x_t, std::size_t t, const Conditioning& cond) const;
  // Predicted noise without recording gradients.
  Tensor denoise(const Tensor& x_t, std::size_t t, const Conditioning& cond) const;
  Var timestep_embedding(Binding& bind, std::size_t t) const;

  /// Adds low-rank adapters to every attention and MLP linear of every block and
  /// freezes the base weights. Trainable afterwards: adapters, Physical Module, classifier.
  LoraReport add_lora(std::size_t rank, double alpha, std::uint64_t seed);
  std::optional<LoraReport> lora() const { return lora_; }
  std::vector<std::string> trainable_parameters() const;

  nlohmann::json metadata() const;
  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  static ToyDiT load(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

 private:
  ToyDiTConfig config_;
  Vocabulary vocab_;
  ParameterSet params_;
  NoiseSchedule schedule_;
  std::vector<std::size_t> patch_index_, unpatch_index_;

  LinearLayer patch_embed_;
  std::size_t pos_embed_ = 0;
  LinearLayer time_in_, time_out_;
  std::size_t text_table_ = 0;
  LinearLayer text_proj_;
  std::vector<DiTBlock> blocks_;
  LinearLayer final_ada_, final_out_;
  std::optional<physmodule::PhysicalModule> module_;
  std::optional<physmodule::Classifier> classifier_;
  std::optional<LoraReport> lora_;
};

// Sinusoidal features of an integer timestep: [cos(t f_i), sin(t f_i)], f_i = 10000^(-i / half).
numcore::Tensor sinusoidal_embedding(std::size_t t, std::size_t width);

struct DiffusionSample {
  Var loss;  // mean squared error between true and predicted noise
  DenoiseResult out;
  std::size_t t = 0;
};

/// Draws t uniformly in [0, T) (unless forced), then eps ~ N(0, I); noises the clip and
/// predicts eps. The clip must lie in [-1, 1].
DiffusionSample diffusion_loss(const ToyDiT& model, Binding& bind, const numcore::Tensor& clip,
                               const Conditioning& cond, Rng& rng, std::optional<std::size_t> forced_t = {});

/// Ancestral sampling over `steps` evenly spaced timesteps (steps <= T), from N(0, I).
/// The result is clamped to [-1, 1].
numcore::Tensor sample(const ToyDiT& model, const Conditioning& cond, std::size_t steps, Rng& rng);

}  // namespace wisa::backbone
