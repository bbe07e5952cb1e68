#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace wisa::backbone {

struct ToyDiTConfig {
  // Clip geometry (single channel) and patch size.
  std::size_t frames = 8, height = 16, width = 16;
  std::size_t patch_frames = 2, patch_height = 4, patch_width = 4;

  std::size_t model_dim = 128;
  std::size_t n_heads = 4;
  std::size_t n_blocks = 4;
  std::size_t mlp_ratio = 4;
  std::size_t time_freq_dim = 64;  // sinusoidal features before the timestep MLP

  std::size_t diffusion_steps = 100;
  std::size_t max_text_len = 64;

  // Physical Module and classifier after the last block.
  bool physical_module = true;
  std::size_t phys_head_dim = 8;
  std::size_t quant_width = 64;

  void validate() const;  // throws UsageError

  std::size_t grid_frames() const { return frames / patch_frames; }
  std::size_t grid_height() const { return height / patch_height; }
  std::size_t grid_width() const { return width / patch_width; }
  std::size_t tokens() const { return grid_frames() * grid_height() * grid_width(); }
  std::size_t patch_dim() const { return patch_frames * patch_height * patch_width; }
  std::size_t clip_size() const { return frames * height * width; }

  // Flat clip index of element k of token i, as index[i * patch_dim() + k].
  std::vector<std::size_t> patch_index() const;
};

void to_json(nlohmann::json& j, const ToyDiTConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ToyDiTConfig& c);

}  // namespace wisa::backbone
