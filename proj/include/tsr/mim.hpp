#pragma once

// Masked image modeling: blockwise patch masks, a learned mask embedding in
// place of masked patch embeddings, and a K-way head predicting the VQ-VAE
// code of every masked patch.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <json.hpp>

#include "tsr/nn/trainer.hpp"
#include "tsr/visual_encoder.hpp"
#include "tsr/vqvae.hpp"

namespace tsr::mim {

using nn::Graph;
using nn::Tensor;
using nn::Var;

struct MaskPlan {
  std::vector<std::uint8_t> masked;  // one flag per patch, row-major
  std::size_t masked_count = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return masked.size(); }
};

/// Masks exactly ceil(ratio * rows * cols) positions (at most N - 1 when
/// ratio < 1) by placing random rectangles on the grid. Deterministic given
/// `seed`.
/// Throws Error(InvalidRatio) unless 0 <= ratio <= 1.
MaskPlan sample_mask(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed);

/// Same, on the most square rows x cols factorization of n.
MaskPlan sample_mask(std::size_t n, double ratio, std::uint64_t seed);

struct MimConfig {
  double mask_ratio = 0.4;
  nn::PhaseSchedule schedule{};
  /// Fraction of pretraining images held out for masked-token accuracy.
  double holdout_fraction = 0.1;

  static MimConfig desk();
  void validate() const;
};

void to_json(nlohmann::json& j, const MimConfig& c);
void from_json(const nlohmann::json& j, MimConfig& c);

template <typename T>
class MimModel {
 public:
  MimModel() = default;
  /// Encoder parameters live under "encoder."; the mask embedding and head
  /// under "mim.".
  MimModel(nn::ParamStore<T>& store, const nn::LayerConfig& cfg, const vision::PatchGrid& grid,
           std::size_t codebook_size, std::mt19937_64& rng);

  /// Patch embeddings after mask replacement, before positions are added.
  Var masked_embeddings(Graph<T>& g, const Tensor<T>& image, const MaskPlan& mask) const;

  /// [N, K] logits.
  Var forward(Graph<T>& g, const Tensor<T>& image, const MaskPlan& mask, const nn::Mode& mode) const;

  const vision::VisualEncoder<T>& encoder() const { return encoder_; }
  std::size_t codebook_size() const { return codebook_size_; }

 private:
  vision::VisualEncoder<T> encoder_;
  nn::Parameter<T>* mask_embedding_ = nullptr;
  nn::Linear<T> head_;
  std::size_t codebook_size_ = 0;
};

/// Cross-entropy over masked positions only. Throws Error(AllIgnored) for an
/// empty mask and Error(ShapeMismatch) on size disagreement.
template <typename T>
Var mim_loss(Graph<T>& g, Var logits, const vq::TokenGrid& targets, const MaskPlan& mask);

struct MimEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double masked_accuracy = 0.0;  // on held-out images
  double heldout_loss = 0.0;
  double lr = 0.0;
  nlohmann::json to_json() const;
};

struct MimEval {
  double loss = 0.0;
  double masked_accuracy = 0.0;
  std::size_t masked_total = 0;
};

/// Eval-mode loss and masked-token accuracy with one fixed mask per image
/// derived from `seed`.
template <typename T>
MimEval evaluate_mim(const MimModel<T>& model, const std::vector<Tensor<T>>& images,
                     const std::vector<vq::TokenGrid>& targets, double ratio, std::uint64_t seed);

/// Trains on `train` and reports held-out accuracy on `heldout` each epoch.
/// Throws Error(ConfigMismatch) if a target grid differs from the patch grid.
template <typename T>
std::vector<MimEpochLog> pretrain(nn::ParamStore<T>& store, const MimModel<T>& model, const MimConfig& cfg,
                                  const nn::AdamWConfig& optim, const std::vector<Tensor<T>>& train,
                                  const std::vector<vq::TokenGrid>& train_targets,
                                  const std::vector<Tensor<T>>& heldout,
                                  const std::vector<vq::TokenGrid>& heldout_targets, std::uint64_t seed,
                                  const std::function<void(const MimEpochLog&)>& on_epoch = {});

}  // namespace tsr::mim
