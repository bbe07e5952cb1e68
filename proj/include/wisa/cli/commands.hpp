#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisa/backbone/model.hpp"
#include "wisa/synthphys/dataset.hpp"
#include "wisa/trainer/train.hpp"

namespace wisa::cli {

namespace fs = std::filesystem;

/// Everything a run needs, read from one JSON document.
struct RunConfig {
  std::uint64_t seed = 0;
  backbone::ToyDiTConfig model;
  trainer::TrainConfig train;
  // Clip geometry always follows the model config.
  std::size_t data_count = 400;
  double val_fraction = 0.2;
  std::vector<synthphys::MixtureEntry> mixture;  // empty: default mixture
  fs::path data_dir = "data";
  fs::path out_dir = "runs/toy";
  std::size_t sample_steps = 50;
  std::size_t attention_clips = 0;  // motion clips scored after training (0 = whole val split)

  synthphys::DatasetSpec dataset_spec() const;
};

/// Every problem found is listed in the message as "<json path>: <reason>"; the
/// exception's path() is the first one. Relative paths resolve against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
RunConfig load_run_config(const fs::path& path);
nlohmann::json to_json(const RunConfig& c);

enum class GateMode { True, AllOnes, Zero };
GateMode parse_gate_mode(std::string_view s);  // "true", "all-ones", "zero"
void apply_gate(backbone::Conditioning& cond, GateMode mode);

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);
// Generates the dataset when data_dir has no manifest, trains, then evaluates best.ckpt.
void cmd_train(const RunConfig& cfg, std::ostream& log);
nlohmann::json cmd_evaluate(const fs::path& checkpoint, const fs::path& data_dir, std::uint64_t seed,
                            std::size_t eval_timestep, std::ostream& log);
void cmd_sample(const fs::path& checkpoint, const fs::path& prompt_file, const fs::path& out_dir, std::uint64_t seed,
                std::size_t steps, GateMode gate, std::ostream& log);
nlohmann::json cmd_classify(const fs::path& checkpoint, const fs::path& data_dir, const std::string& clip_id,
                            std::uint64_t seed, std::size_t t, GateMode gate, std::ostream& log);
nlohmann::json cmd_inspect_attn(const fs::path& checkpoint, const fs::path& data_dir, const std::string& clip_id,
                                const fs::path& out_dir, std::uint64_t seed, std::size_t t, std::ostream& log);
// Returns the total number of violations.
std::size_t cmd_validate(const std::vector<fs::path>& files, bool strict, std::ostream& log);
nlohmann::json cmd_stats(const fs::path& data_dir, std::ostream& log);

// Greyscale frames side by side, values mapped from [-1, 1] to [0, 255].
void write_clip_pgm(const numcore::Tensor& clip, const fs::path& path);

}  // namespace wisa::cli
