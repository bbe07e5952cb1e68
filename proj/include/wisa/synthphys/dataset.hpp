#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisa/synthphys/scenario.hpp"

namespace wisa::synthphys {

struct MixtureEntry {
  ScenarioKind kind = ScenarioKind::Static;
  double weight = 0.0;
  std::optional<Scenario> fixed;  // when unset, parameters are drawn per clip
};

struct DatasetSpec {
  std::vector<MixtureEntry> mixture;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  std::size_t frames = 8, height = 16, width = 16;

  // 47% Dynamics (three kinds), 24% Thermodynamics (two kinds), 29% Optics; Static at weight 0.
  static DatasetSpec defaults(std::size_t count, std::uint64_t seed);
  void validate() const;  // weights >= 0 summing to 1 within 1e-9
};

// Scenario spec file: JSON list of {kind, params, weight}.
std::vector<MixtureEntry> mixture_from_json(const nlohmann::json& j);
nlohmann::json mixture_to_json(const std::vector<MixtureEntry>& m);

struct ClipRecord {
  std::string id;
  ScenarioKind kind = ScenarioKind::Static;
  std::string split;  // "train" or "val"
  std::uint64_t seed = 0;
  Scenario scenario;
};

/// Kind of clip i and its scenario, as make_dataset would draw them.
std::vector<ClipRecord> plan_dataset(const DatasetSpec& spec);

/// Writes clips/<id>.clip, annotations/<id>.json and manifest.json under `dir`.
/// Rendering uses up to WISA_LAB_THREADS threads; the output does not depend on it.
void make_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

// Clip tensor file: u32 magic, frames, height, width (little endian), then float32 values.
inline constexpr std::uint32_t kClipMagic = 0x504C4357;  // "WCLP"
void write_clip(const std::filesystem::path& path, const Tensor& clip);
Tensor read_clip(const std::filesystem::path& path);

class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<ClipRecord>& records() const { return records_; }
  const nlohmann::json& manifest() const { return manifest_; }
  std::vector<const ClipRecord*> split(std::string_view name) const;

  Tensor clip(const std::string& id) const;
  physchema::PhysicalAnnotation annotation(const std::string& id) const;

  // Throws DatasetError when an id appears in both splits.
  void check_disjoint() const;

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::vector<ClipRecord> records_;
};

struct DatasetStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_kind;
  std::map<std::string, std::size_t> by_branch;  // "none" for clips without a branch
  std::map<std::string, std::size_t> by_split;
  double branch_fraction(const std::string& branch) const;
};

DatasetStats compute_stats(const Dataset& ds);

// Threads for data generation: WISA_LAB_THREADS when set (>= 1), else the hardware count.
std::size_t generation_threads();

}  // namespace wisa::synthphys
