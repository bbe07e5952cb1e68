#pragma once

#include <filesystem>

#include <json.hpp>

#include "wisa/numcore/params.hpp"

namespace wisa::physmodule {

/// Checkpoint file layout:
///   8 bytes  "WISACKPT"
///   u64 LE   header length in bytes
///   header   JSON {"metadata": ..., "tensors": [{"name", "shape", "offset", "trainable"}]}
///   data     little-endian float64 arrays; offsets are relative to the start of this section
void save_checkpoint(const std::filesystem::path& path, const numcore::ParameterSet& params,
                     const nlohmann::json& metadata);

// Reads only the header.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Overwrites the values of `params` from the file. Every parameter must be present with
/// the same shape; the trainable flags are restored too. Returns the metadata object.
nlohmann::json load_checkpoint(const std::filesystem::path& path, numcore::ParameterSet& params);

}  // namespace wisa::physmodule
