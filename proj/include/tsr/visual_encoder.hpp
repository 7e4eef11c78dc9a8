#pragma once

// Linear-projection patch embedding followed by a transformer encoder stack.
// Patches are ordered row-major (top-left to bottom-right); the VQ-VAE token
// grid uses the same order so masked-token targets line up.

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/nn/layers.hpp"

namespace tsr::vision {

using nn::Graph;
using nn::Tensor;
using nn::Var;

struct PatchGrid {
  std::size_t patch = 16;
  std::size_t rows = 0;  // H / P
  std::size_t cols = 0;  // W / P
  std::size_t channels = 3;

  std::size_t count() const { return rows * cols; }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t height() const { return rows * patch; }
  std::size_t width() const { return cols * patch; }

  /// Throws Error(IndivisibleImage) unless P divides both H and W.
  static PatchGrid for_image(std::size_t height, std::size_t width, std::size_t channels, std::size_t patch);

  bool operator==(const PatchGrid&) const = default;
};

/// [H, W, C] -> [N, P*P*C]; each row is one patch flattened as (py, px, c).
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch);

/// Exact inverse of patchify.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, const PatchGrid& grid);

/// Per-channel mean / standard deviation used to normalize [0, 1] pixels.
struct Normalization {
  std::vector<float> mean{0.5f, 0.5f, 0.5f};
  std::vector<float> std{0.5f, 0.5f, 0.5f};

  static Normalization imagenet();
  static Normalization from_images(const std::vector<Tensor<float>>& images);

  Tensor<float> apply(const Tensor<float>& image) const;

  nlohmann::json to_json() const;
  static Normalization from_json(const nlohmann::json& j);
};

template <typename T>
class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(nn::ParamStore<T>& store, const std::string& prefix, const nn::LayerConfig& cfg, const PatchGrid& grid,
                std::mt19937_64& rng);

  /// Patchify + linear projection: [N, d] patch embeddings, no positions.
  Var embed(Graph<T>& g, const Tensor<T>& image) const;

  /// Adds positional embeddings and runs the encoder layers + final norm.
  Var encode_embeddings(Graph<T>& g, Var patch_embeddings, const nn::Mode& mode) const;

  Var encode(Graph<T>& g, const Tensor<T>& image, const nn::Mode& mode) const;

  const PatchGrid& grid() const { return grid_; }
  std::size_t width() const { return cfg_.d_model; }

 private:
  nn::LayerConfig cfg_;
  PatchGrid grid_;
  nn::Linear<T> projection_;
  nn::Parameter<T>* positions_ = nullptr;
  std::vector<nn::EncoderLayer<T>> layers_;
  nn::LayerNorm<T> norm_;
};

}  // namespace tsr::vision
