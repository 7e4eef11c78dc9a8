#pragma once

// Phase drivers shared by the CLI and the acceptance harness. Every phase
// reads datasets / checkpoints from disk and writes its artifacts under a
// directory whose name carries the config lineage (hash + seed).

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "tsr/config.hpp"
#include "tsr/teds.hpp"

namespace tsr::pipeline {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

/// Writes a synthetic dataset of `n` samples with the given split fraction.
synth::DatasetSummary make_dataset(const config::RunConfig& cfg, const fs::path& dir, std::size_t n,
                                   std::uint64_t seed, double val_fraction);

struct VqvaeResult {
  fs::path checkpoint;
  double final_loss = 0.0;
  std::size_t codes_used = 0;
  nlohmann::json to_json() const;
};

/// Trains the tokenizer on images/ of `dataset_dir`.
VqvaeResult train_vqvae(const config::RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                        const Logger& log = {});

struct PretrainResult {
  fs::path checkpoint;
  double final_loss = 0.0;
  double masked_accuracy = 0.0;
  double heldout_loss = 0.0;
  std::size_t heldout_images = 0;
  nlohmann::json to_json() const;
};

/// MIM pretraining on images/ of `dataset_dir` (labels are never read).
/// Throws Error(ConfigMismatch) if the tokenizer's grid differs from the
/// configured patch grid.
PretrainResult pretrain(const config::RunConfig& cfg, const fs::path& dataset_dir, const fs::path& vqvae_ckpt,
                        const fs::path& out_dir, const Logger& log = {});

struct FinetuneResult {
  fs::path checkpoint;
  std::string init;      // "scratch" | "mim"
  std::string schedule;  // "frozen" | "full"
  std::string encoder_hash_before;
  std::string encoder_hash_after;
  nlohmann::json history = nlohmann::json::array();
  teds::TedsReport val;
  nlohmann::json to_json() const;
};

/// `mim_ckpt` empty means Scratch init.
FinetuneResult finetune(const config::RunConfig& cfg, const fs::path& dataset_dir,
                        const std::optional<fs::path>& mim_ckpt, model::Schedule schedule, const fs::path& out_dir,
                        const Logger& log = {});

/// Greedy-decodes one split with a finetuned checkpoint.
teds::TedsReport evaluate_checkpoint(const config::RunConfig& cfg, const fs::path& dataset_dir,
                                     const fs::path& tsr_ckpt, const std::string& split,
                                     nlohmann::json* predictions = nullptr);

struct RecipeResult {
  nlohmann::json metrics;  // deterministic content only
  std::string comparison;  // text table
  fs::path metrics_path;
};

/// synth -> train-vqvae -> pretrain -> finetune (scratch/full, mim/full,
/// mim/frozen) -> comparison table.
RecipeResult run_recipe(const config::RunConfig& cfg, const fs::path& out_dir, const Logger& log = {});

}  // namespace tsr::pipeline
