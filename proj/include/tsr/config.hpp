#pragma once

// One JSON document describing a whole experiment. Flags override fields by
// dot path, e.g. `--set finetune.full.epochs=3`.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/mim.hpp"
#include "tsr/nn/layers.hpp"
#include "tsr/nn/optim.hpp"
#include "tsr/synth.hpp"
#include "tsr/tsr_model.hpp"
#include "tsr/vqvae.hpp"

namespace tsr::config {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "TSR_OUTPUT_ROOT";

struct ImageConfig {
  std::size_t resolution = 64;
  std::size_t patch = 16;
  std::size_t channels = 3;
  std::string normalization = "dataset";  // "dataset" | "imagenet"
};

struct DataConfig {
  std::size_t pretrain_images = 2000;
  std::size_t train_images = 1000;
  std::size_t val_images = 200;
};

struct EvalConfig {
  std::size_t max_len = model::kMaxSequence;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: $TSR_OUTPUT_ROOT or ./runs
  ImageConfig image;
  nn::LayerConfig model = nn::LayerConfig::desk();
  nn::AdamWConfig optim;
  synth::SynthConfig synth;
  DataConfig data;
  vq::VqvaeConfig vqvae = vq::VqvaeConfig::desk();
  mim::MimConfig pretrain = mim::MimConfig::desk();
  model::FinetuneConfig finetune;
  EvalConfig eval;

  /// Desk-scale defaults (64x64 images, d=64).
  static RunConfig desk();
  /// Full-size training settings (448x448, 12+4 layers of 768).
  static RunConfig full_scale();

  /// Cross-phase checks: patch divides resolution, vocabulary of 32, decoder
  /// length limit 512. Throws Error(ConfigError) / Error(IndivisibleImage).
  void validate() const;

  vision::PatchGrid grid() const;
  std::filesystem::path output_root() const;
  /// FNV-1a of the canonical JSON without output_dir.
  std::uint64_t hash() const;
  /// "<hash8>-s<seed>", embedded in artifact names.
  std::string lineage() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig from_json(const nlohmann::json& j);

/// Reads a JSON config file (missing fields keep desk defaults).
RunConfig load(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when possible
/// and taken as a string otherwise. Unknown paths are rejected.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

}  // namespace tsr::config
