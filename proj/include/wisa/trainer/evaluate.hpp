#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisa/backbone/model.hpp"
#include "wisa/synthphys/dataset.hpp"

namespace wisa::trainer {

using Probabilities = std::array<double, wisa::kNumCategories>;

struct CategoryScore {
  int id = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool defined = false;  // false when the category never occurs and is never predicted
};

struct ClassificationReport {
  std::vector<CategoryScore> categories;  // ids 1..29
  double macro_f1 = 0.0;                  // mean F1 over defined categories
  std::size_t samples = 0;
};

ClassificationReport score_predictions(const std::vector<Probabilities>& probs,
                                       const std::vector<mopa::GatingVector>& targets, double threshold = 0.5);

// Classifier probabilities for a clean clip noised to timestep t with seeded noise.
Probabilities classify_clip(const backbone::ToyDiT& model, const numcore::Tensor& clip,
                            const backbone::Conditioning& cond, std::size_t t, std::uint64_t noise_seed);

struct EvalReport {
  ClassificationReport classification;
  double val_loss_true = 0.0;  // true gates
  double val_loss_ones = 0.0;  // every expert on
  double gate_delta() const { return val_loss_ones - val_loss_true; }
  std::size_t clips = 0;
};

/// Scores the val split. Throws DatasetError on split leakage.
EvalReport evaluate(const backbone::ToyDiT& model, const synthphys::Dataset& data, std::size_t eval_timestep,
                    std::uint64_t seed, std::size_t max_clips = 0);
nlohmann::json to_json(const EvalReport& r);

// Token-level motion mask: a token moves when any of its pixels changes by more than threshold
// against an adjacent frame.
std::vector<bool> motion_mask(const backbone::ToyDiTConfig& cfg, const numcore::Tensor& clip,
                              double threshold = 0.05);

// Attention mass on the masked keys, averaged over queries, divided by the masked fraction.
std::optional<double> localization_ratio(const numcore::Tensor& attention, const std::vector<bool>& mask);

struct ExpertReport {
  int category = 0;
  double gate = 0.0;
  std::optional<double> ratio;      // empty when the clip has no moving tokens
  std::vector<double> key_mass;     // per token, mean over queries
};

struct AttentionReport {
  std::string clip_id;
  std::size_t timestep = 0;
  bool applicable = false;
  double motion_fraction = 0.0;
  std::vector<bool> mask;
  std::vector<ExpertReport> experts;  // one per category, id order
  // Mean ratio over active non-fallback Dynamics experts, when any.
  std::optional<double> dynamics_ratio() const;
};

AttentionReport attention_report(const backbone::ToyDiT& model, const numcore::Tensor& clip,
                                 const physchema::PhysicalAnnotation& annotation, std::size_t t,
                                 std::uint64_t noise_seed, const std::string& clip_id = "");
nlohmann::json to_json(const AttentionReport& r);

// Greyscale grid: one tile per (expert, token-frame), plus the motion mask tile row first.
void write_attention_pgm(const backbone::ToyDiTConfig& cfg, const AttentionReport& r,
                         const std::filesystem::path& path, std::size_t cell = 4);

}  // namespace wisa::trainer
