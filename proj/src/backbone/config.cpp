#include "wisa/backbone/config.hpp"

#include <string>

#include "wisa/errors.hpp"

namespace wisa::backbone {

void ToyDiTConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("model config: " + what);
  };
  need(frames > 0 && height > 0 && width > 0, "clip dimensions must be positive");
  need(patch_frames > 0 && patch_height > 0 && patch_width > 0, "patch dimensions must be positive");
  need(frames % patch_frames == 0 && height % patch_height == 0 && width % patch_width == 0,
       "clip dimensions must be multiples of the patch size");
  need(model_dim > 0 && n_heads > 0 && model_dim % n_heads == 0, "model_dim must be divisible by n_heads");
  need(n_blocks > 0 && mlp_ratio > 0, "n_blocks and mlp_ratio must be positive");
  need(time_freq_dim >= 2 && time_freq_dim % 2 == 0, "time_freq_dim must be even");
  need(diffusion_steps >= 1, "diffusion_steps must be at least 1");
  need(max_text_len >= 1, "max_text_len must be at least 1");
  need(phys_head_dim > 0 && quant_width > 0, "physical module widths must be positive");
}

std::vector<std::size_t> ToyDiTConfig::patch_index() const {
  std::vector<std::size_t> idx;
  idx.reserve(clip_size());
  for (std::size_t gf = 0; gf < grid_frames(); ++gf)
    for (std::size_t gh = 0; gh < grid_height(); ++gh)
      for (std::size_t gw = 0; gw < grid_width(); ++gw)
        for (std::size_t df = 0; df < patch_frames; ++df)
          for (std::size_t dh = 0; dh < patch_height; ++dh)
            for (std::size_t dw = 0; dw < patch_width; ++dw) {
              const std::size_t f = gf * patch_frames + df;
              const std::size_t h = gh * patch_height + dh;
              const std::size_t w = gw * patch_width + dw;
              idx.push_back((f * height + h) * width + w);
            }
  return idx;
}

#define WISA_CONFIG_FIELDS(X)                                                                               \
  X(frames) X(height) X(width) X(patch_frames) X(patch_height) X(patch_width) X(model_dim) X(n_heads)       \
      X(n_blocks) X(mlp_ratio) X(time_freq_dim) X(diffusion_steps) X(max_text_len) X(physical_module)       \
          X(phys_head_dim) X(quant_width)

void to_json(nlohmann::json& j, const ToyDiTConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  WISA_CONFIG_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, ToyDiTConfig& c) {
  if (!j.is_object()) throw ParseError("$", "model config must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                                                                                  \
  if (key == #name) {                                                                            \
    known = true;                                                                                \
    try {                                                                                        \
      value.get_to(c.name);                                                                      \
    } catch (const nlohmann::json::exception&) {                                                 \
      throw ParseError("$." + key, "wrong type");                                                \
    }                                                                                            \
  }
    WISA_CONFIG_FIELDS(X)
#undef X
    if (!known) throw ParseError("$." + key, "unknown key");
  }
}

#undef WISA_CONFIG_FIELDS

}  // namespace wisa::backbone
