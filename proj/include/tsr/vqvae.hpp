#pragma once

// Discrete visual tokenizer trained through a Gumbel-softmax relaxation. The
// encoder is a stride-P patch convolution followed by 1x1 convolutions, so
// every P x P patch gets exactly one code and the token grid matches the
// visual encoder's patch grid.

#include <functional>
#include <random>
#include <vector>

#include <json.hpp>

#include "tsr/nn/layers.hpp"
#include "tsr/nn/trainer.hpp"
#include "tsr/visual_encoder.hpp"

namespace tsr::vq {

using nn::Graph;
using nn::Tensor;
using nn::Var;

struct VqvaeConfig {
  std::size_t codebook_size = 8192;  // K
  std::size_t code_dim = 512;        // D
  std::size_t hidden = 512;
  double tau_start = 1.0;
  double tau_end = 0.0625;
  bool hard = false;
  /// Weight of KL(q(z|I) || uniform) added to the reconstruction loss.
  double kl_weight = 0.0;
  nn::PhaseSchedule schedule{};

  static VqvaeConfig desk();
  void validate() const;
};

void to_json(nlohmann::json& j, const VqvaeConfig& c);
void from_json(const nlohmann::json& j, VqvaeConfig& c);

struct TokenGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> codes;  // row-major

  int at(std::size_t r, std::size_t c) const { return codes[r * cols + c]; }
  bool operator==(const TokenGrid&) const = default;

  /// Integer matrix form: [[c00, c01, ...], ...].
  nlohmann::json to_json() const;
  static TokenGrid from_json(const nlohmann::json& j);
};

/// softmax((logits + g) / tau) with g ~ Gumbel(0, 1). With `hard`, the forward
/// value is the one-hot argmax and the gradient is that of the soft sample.
/// Throws Error(InvalidTemperature) unless tau > 0.
template <typename T>
Var gumbel_softmax(Graph<T>& g, Var logits, double tau, bool hard, std::mt19937_64& rng);

template <typename T>
Tensor<T> gumbel_softmax(const Tensor<T>& logits, double tau, bool hard, std::mt19937_64& rng);

/// Exponential decay from tau_start at step 0 to tau_end at the last step.
double temperature_at(const VqvaeConfig& c, std::size_t step, std::size_t total_steps);

template <typename T>
class Vqvae {
 public:
  Vqvae() = default;
  Vqvae(nn::ParamStore<T>& store, const VqvaeConfig& cfg, const vision::PatchGrid& grid, std::mt19937_64& rng);

  /// [N, K] code logits for a normalized image.
  Var logits(Graph<T>& g, const Tensor<T>& image) const;

  /// Decodes per-patch code weights [N, K] to patch pixels [N, P*P*C].
  Var decode(Graph<T>& g, Var code_weights) const;

  /// Reconstruction MSE through a relaxed code sample, plus the weighted KL
  /// term when kl_weight > 0.
  Var loss(Graph<T>& g, const Tensor<T>& image, double tau, std::mt19937_64& rng) const;

  /// Argmax code per patch; no noise.
  TokenGrid tokenize(const Tensor<T>& image) const;

  /// Throws Error(IndexOutOfRange) for codes outside [0, K) and
  /// Error(ShapeMismatch) for a grid of the wrong size.
  Tensor<T> reconstruct(const TokenGrid& grid) const;

  const VqvaeConfig& config() const { return cfg_; }
  const vision::PatchGrid& grid() const { return grid_; }

 private:
  VqvaeConfig cfg_;
  vision::PatchGrid grid_;
  nn::Linear<T> enc1_, enc2_, enc_out_;
  nn::Parameter<T>* codebook_ = nullptr;  // [K, D]
  nn::Linear<T> dec1_, dec2_, dec_out_;
};

/// One optimizer step over `batch` (indices into `images`). Returns mean loss.
template <typename T>
double vqvae_train_step(const Vqvae<T>& model, nn::AdamW<T>& opt, nn::GradBuffer<T>& grads,
                        const std::vector<Tensor<T>>& images, const std::vector<std::size_t>& batch, double tau,
                        double lr, std::uint64_t step_seed);

struct VqvaeEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double tau = 0.0;
  double lr = 0.0;
  nlohmann::json to_json() const;
};

/// Full training loop over normalized images.
template <typename T>
std::vector<VqvaeEpochLog> train_vqvae(nn::ParamStore<T>& store, const Vqvae<T>& model,
                                       const std::vector<Tensor<T>>& images, const nn::AdamWConfig& optim,
                                       std::uint64_t seed,
                                       const std::function<void(const VqvaeEpochLog&)>& on_epoch = {});

}  // namespace tsr::vq
