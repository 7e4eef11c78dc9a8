#pragma once

// Checkpoint directory layout:
//   manifest.json   {schema_version, tag, seed, dtype, params:[{name, shape, file}], extra}
//   <name>.bin      raw little-endian array per parameter
// Writes go to a sibling temp directory that is renamed into place, so a
// failed save never leaves a partial manifest behind.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tsr/nn/graph.hpp"

namespace tsr::nn {

inline constexpr int kCheckpointSchema = 1;

struct CheckpointInfo {
  std::string tag;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct LoadOptions {
  // Only parameters whose names start with this prefix are loaded.
  std::string prefix;
  // Accept a checkpoint that lacks some of the selected parameters.
  bool allow_missing = false;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamStore<T>& store, const CheckpointInfo& info,
                     const std::string& prefix = "");

/// Loads values into an existing store, validating names and shapes; throws
/// Error(CheckpointMismatch) on any disagreement.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ParamStore<T>& store, const LoadOptions& opts = {});

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// FNV-1a over the raw bytes of every selected parameter, in store order.
template <typename T>
std::uint64_t params_hash(const ParamStore<T>& store, const std::string& prefix = "");

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

/// Writes `content` to `path` through a temp file + rename.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace tsr::nn
