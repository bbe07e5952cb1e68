#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisa/backbone/model.hpp"
#include "wisa/synthphys/dataset.hpp"

namespace wisa::trainer {

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 2e-5;
  std::size_t batch = 8;
  double lambda = 0.1;
  double perturb_prob = 0.2;
  std::uint64_t seed = 0;
  std::size_t lora_rank = 4;
  double lora_alpha = 16.0;
  bool classifier = true;  // false drops the auxiliary term entirely

  // Optional full-parameter diffusion pretraining of the backbone before adapters are added.
  std::size_t pretrain_steps = 0;
  double pretrain_lr = 1e-3;

  std::size_t val_every = 50;
  std::size_t val_clips = 64;        // validation subset size (0 = whole split)
  std::size_t val_timesteps = 4;     // stratified noise levels per validation clip
  std::size_t eval_timestep = 10;    // noise level for classifier metrics and attention maps

  void validate() const;  // throws UsageError
};

nlohmann::json to_json(const TrainConfig& c);
// Unknown keys and wrong types raise ParseError with the JSON path.
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "$");

// One row of the metrics log.
struct StepMetrics {
  std::size_t step = 0;
  double l_diffusion = 0.0;
  double l_pc = 0.0;
  double l_total = 0.0;
};

struct TrainResult {
  std::size_t steps = 0;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  std::vector<StepMetrics> log;
  std::filesystem::path best_checkpoint, last_checkpoint, metrics_log;
};

/// Fine-tunes a model on the dataset's train split.
///
/// Writes under out_dir: metrics.jsonl (one row per step), validation.jsonl,
/// pretrain.jsonl (when pretraining), best.ckpt, last.ckpt.
/// Throws NumericError naming the step on a non-finite loss, after saving last_good.ckpt.
TrainResult train(const backbone::ToyDiTConfig& model_cfg, const TrainConfig& cfg, const synthphys::Dataset& data,
                  const std::filesystem::path& out_dir);

/// The steps of train() on an existing model, for tests. The model must already carry adapters.
TrainResult finetune(backbone::ToyDiT& model, const TrainConfig& cfg, const synthphys::Dataset& data,
                     const std::filesystem::path& out_dir);

// Vocabulary over captions and descriptions of the train split.
backbone::Vocabulary build_vocabulary(const synthphys::Dataset& data);

// Validation diffusion loss with paired noise: clip i always sees the same timesteps and eps.
// Timestep j of clip i is floor((j + u_i) * T / levels) with a seeded offset u_i in [0, 1).
double validation_loss(const backbone::ToyDiT& model, const synthphys::Dataset& data,
                       const std::vector<const synthphys::ClipRecord*>& clips, std::uint64_t seed,
                       std::optional<mopa::GatingVector> gate_override = {}, std::size_t levels = 4);

}  // namespace wisa::trainer
