#pragma once

#include <vector>

#include <json.hpp>

#include "tsr/nn/graph.hpp"

namespace tsr::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

void to_json(nlohmann::json& j, const AdamWConfig& c);
void from_json(const nlohmann::json& j, AdamWConfig& c);

/// AdamW with decoupled weight decay and bias-corrected moments. State is
/// allocated only for parameters that are trainable at construction time.
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& store, AdamWConfig config);

  void step(const GradBuffer<T>& grads, double lr);

  std::size_t step_count() const { return step_; }
  /// Number of parameters with moment buffers.
  std::size_t state_count() const { return slots_.size(); }
  bool has_state(const Parameter<T>& p) const;

 private:
  struct Slot {
    Parameter<T>* param;
    Tensor<T> m;
    Tensor<T> v;
  };

  ParamStore<T>& store_;
  AdamWConfig config_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
};

/// Linear warmup from 0 to `peak_lr` over `warmup_steps`, then cosine decay to
/// 0 at `total_steps`. Throws Error(InvalidSchedule) on bad arguments.
double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double peak_lr);

}  // namespace tsr::nn
