#pragma once

// Synthetic bordered tables with optional merged cells, rendered without
// text: borders, a shaded header band and per-cell ink bars.

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>

#include <json.hpp>

#include "tsr/grammar.hpp"
#include "tsr/nn/tensor.hpp"

namespace tsr::synth {

struct SynthConfig {
  std::size_t min_rows = 2;
  std::size_t max_rows = 5;
  std::size_t min_cols = 2;
  std::size_t max_cols = 5;
  double span_prob = 0.06;
  bool header = true;
  std::size_t resolution = 64;
  std::size_t patch = 16;  // only checked for divisibility
  std::size_t fill_styles = 4;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Random grid with merges; the token sequence is framed and parses back to
/// the returned tree.
std::pair<grammar::TableTree, grammar::TokenSeq> generate_table(const SynthConfig& config, std::mt19937_64& rng);

/// [R, R, 3] raster with values in [0, 1]. Throws Error(GridOverflow) if the
/// grid cannot be drawn at this resolution.
nn::Tensor<float> render(const grammar::TableTree& tree, const SynthConfig& config);

struct DatasetSummary {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t simple = 0;
  std::size_t complex = 0;
};

/// Writes images/NNNNNN.png and labels.jsonl under `dir`. Sample i uses an
/// RNG seeded from (seed, i); the val split is a seeded permutation prefix.
DatasetSummary build_dataset(const std::filesystem::path& dir, std::size_t n, const SynthConfig& config);

}  // namespace tsr::synth
