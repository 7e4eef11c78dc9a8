#include "tsr/nn/trainer.hpp"

#include <algorithm>
#include <random>

namespace tsr::nn {

void PhaseSchedule::validate(const std::string& phase) const {
  if (epochs == 0) throw Error(ErrorCode::ConfigError, phase + ".epochs must be >= 1");
  if (batch_size == 0) throw Error(ErrorCode::ConfigError, phase + ".batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::ConfigError, phase + ".lr must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, phase + ".warmup_fraction must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const PhaseSchedule& s) {
  j = {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"lr", s.lr}, {"warmup_fraction", s.warmup_fraction}};
}

void from_json(const nlohmann::json& j, PhaseSchedule& s) {
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.lr = j.value("lr", s.lr);
  s.warmup_fraction = j.value("warmup_fraction", s.warmup_fraction);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h ^ (p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    h = z ^ (z >> 31);
  }
  return h;
}

double schedule_lr(const PhaseSchedule& s, std::size_t step, std::size_t total) {
  const auto warmup = static_cast<std::size_t>(s.warmup_fraction * static_cast<double>(total));
  // Shifted by one so neither the first nor the last step runs at lr 0.
  return cosine_warmup_lr(step + 1, warmup, total + 1, s.lr);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace tsr::nn
