#pragma once

// Shared pieces of the training loops: phase schedule, seed derivation and a
// gradient-accumulating mini-batch step over per-sample graphs.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/nn/optim.hpp"

namespace tsr::nn {

struct PhaseSchedule {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  /// Warmup length as a fraction of all optimizer steps.
  double warmup_fraction = 0.1;

  std::size_t steps_per_epoch(std::size_t n) const { return (n + batch_size - 1) / batch_size; }
  void validate(const std::string& phase) const;
};

void to_json(nlohmann::json& j, const PhaseSchedule& s);
void from_json(const nlohmann::json& j, PhaseSchedule& s);

/// splitmix64 fold; used to give every (seed, epoch, sample) its own stream so
/// results do not depend on visiting order.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// Per-step learning rate for 0-based optimizer step `step` of `total`.
double schedule_lr(const PhaseSchedule& s, std::size_t step, std::size_t total);

/// Deterministic permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Builds one graph per sample with `loss_fn(graph, sample)`, backpropagates,
/// averages parameter gradients over the batch and applies one optimizer step.
/// Returns the mean loss. Throws Error(NonFiniteLoss) before touching params.
template <typename T, typename LossFn>
double accumulate_step(AdamW<T>& opt, GradBuffer<T>& grads, const std::vector<std::size_t>& batch, double lr,
                       LossFn&& loss_fn) {
  grads.zero();
  double total = 0.0;
  for (std::size_t sample : batch) {
    Graph<T> g(true);
    Var loss = loss_fn(g, sample);
    const double v = static_cast<double>(g.value(loss)[0]);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite loss " + std::to_string(v) + " at sample " +
                                                std::to_string(sample) + " (optimizer step " +
                                                std::to_string(opt.step_count()) + ")");
    }
    total += v;
    g.backward(loss);
    g.accumulate_into(grads);
  }
  grads.scale(static_cast<T>(1.0 / static_cast<double>(batch.size())));
  opt.step(grads, lr);
  return total / static_cast<double>(batch.size());
}

}  // namespace tsr::nn
