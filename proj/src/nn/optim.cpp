#include "tsr/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace tsr::nn {

void to_json(nlohmann::json& j, const AdamWConfig& c) {
  j = {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, AdamWConfig& c) {
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& store, AdamWConfig config) : store_(store), config_(config) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store[i];
    if (!p.trainable) continue;
    slots_.push_back(Slot{&p, Tensor<T>(p.value.shape()), Tensor<T>(p.value.shape())});
  }
}

template <typename T>
bool AdamW<T>::has_state(const Parameter<T>& p) const {
  for (const auto& s : slots_) {
    if (s.param == &p) return true;
  }
  return false;
}

template <typename T>
void AdamW<T>::step(const GradBuffer<T>& grads, double lr) {
  if (grads.size() != store_.size()) throw Error(ErrorCode::ShapeMismatch, "AdamW: gradient buffer mismatch");
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (auto& slot : slots_) {
    auto& w = slot.param->value.values();
    const auto& g = grads[slot.param->id].values();
    auto& m = slot.m.values();
    auto& v = slot.v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + config_.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) * decay - lr * update);
    }
  }
}

double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double peak_lr) {
  if (total_steps == 0 || warmup_steps >= total_steps) {
    throw Error(ErrorCode::InvalidSchedule, "need warmup_steps < total_steps (got " + std::to_string(warmup_steps) +
                                                " / " + std::to_string(total_steps) + ")");
  }
  if (step > total_steps) {
    throw Error(ErrorCode::InvalidSchedule,
                "step " + std::to_string(step) + " beyond total_steps " + std::to_string(total_steps));
  }
  if (!(peak_lr >= 0.0)) throw Error(ErrorCode::InvalidSchedule, "peak_lr must be >= 0");
  if (step < warmup_steps) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * peak_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace tsr::nn
