#include "tsr/mim.hpp"

#include <cmath>

namespace tsr::mim {

namespace {

std::size_t masked_target(std::size_t n, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidRatio, "mask ratio must be in [0, 1], got " + std::to_string(ratio));
  }
  // Guard the ceiling against ratio * n landing a hair above an integer.
  const double raw = ratio * static_cast<double>(n);
  const double rounded = std::round(raw);
  const double want = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  const auto count = std::min(n, static_cast<std::size_t>(want));
  // A ratio below one always leaves some context visible.
  return ratio < 1.0 && count == n && n > 1 ? n - 1 : count;
}

}  // namespace

MaskPlan sample_mask(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::ShapeMismatch, "sample_mask needs a non-empty grid");
  const std::size_t n = rows * cols;
  const std::size_t target = masked_target(n, ratio);
  MaskPlan plan;
  plan.masked.assign(n, 0);
  plan.seed = seed;
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto pick = [&rng](std::size_t k) { return static_cast<std::size_t>(rng() % k); };

  const double log_lo = std::log(0.3);
  const double log_hi = std::log(1.0 / 0.3);
  const std::size_t max_block = std::max<std::size_t>(4, target / 2);
  std::size_t stalls = 0;
  while (plan.masked_count < target) {
    const std::size_t remaining = target - plan.masked_count;
    const std::size_t hi_area = std::min(remaining, max_block);
    const std::size_t lo_area = std::min<std::size_t>(hi_area, 2);
    const double area = static_cast<double>(lo_area + pick(hi_area - lo_area + 1));
    const double aspect = std::exp(log_lo + (log_hi - log_lo) * uniform());
    const auto h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area * aspect))), 1, rows);
    const auto w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area / aspect))), 1, cols);
    // Anchors may hang off the grid so every cell is covered by the same
    // number of placements; the block is clipped to the grid.
    const long top = static_cast<long>(pick(rows + h - 1)) - static_cast<long>(h - 1);
    const long left = static_cast<long>(pick(cols + w - 1)) - static_cast<long>(w - 1);
    std::size_t added = 0;
    for (long r = std::max(top, 0L); r < std::min(top + static_cast<long>(h), static_cast<long>(rows)); ++r) {
      for (long c = std::max(left, 0L); c < std::min(left + static_cast<long>(w), static_cast<long>(cols)); ++c) {
        auto& flag = plan.masked[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
        if (flag || plan.masked_count == target) continue;
        flag = 1;
        ++plan.masked_count;
        ++added;
      }
    }
    stalls = added == 0 ? stalls + 1 : 0;
    if (stalls > 64) {
      // Nearly full grid: finish with single free cells.
      std::size_t skip = pick(n - plan.masked_count);
      for (std::size_t i = 0; i < n; ++i) {
        if (plan.masked[i]) continue;
        if (skip-- == 0) {
          plan.masked[i] = 1;
          ++plan.masked_count;
          break;
        }
      }
      stalls = 0;
    }
  }
  return plan;
}

MaskPlan sample_mask(std::size_t n, double ratio, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "sample_mask needs N >= 1");
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (rows > 1 && n % rows != 0) --rows;
  return sample_mask(rows, n / rows, ratio, seed);
}

MimConfig MimConfig::desk() {
  MimConfig c;
  c.schedule = nn::PhaseSchedule{20, 16, 1e-3, 0.05};
  return c;
}

void MimConfig::validate() const {
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidRatio, "pretrain.mask_ratio must be in (0, 1]");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "pretrain.holdout_fraction must be in [0, 1)");
  }
  schedule.validate("pretrain");
}

void to_json(nlohmann::json& j, const MimConfig& c) {
  j = {{"mask_ratio", c.mask_ratio}, {"holdout_fraction", c.holdout_fraction}, {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, MimConfig& c) {
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
}

template <typename T>
MimModel<T>::MimModel(nn::ParamStore<T>& store, const nn::LayerConfig& cfg, const vision::PatchGrid& grid,
                      std::size_t codebook_size, std::mt19937_64& rng)
    : codebook_size_(codebook_size) {
  encoder_ = vision::VisualEncoder<T>(store, "encoder", cfg, grid, rng);
  mask_embedding_ = &store.add("mim.mask_embedding", nn::normal_init<T>({cfg.d_model}, 0.02, rng));
  head_ = nn::Linear<T>(store, "mim.head", cfg.d_model, codebook_size, rng);
}

template <typename T>
Var MimModel<T>::masked_embeddings(Graph<T>& g, const Tensor<T>& image, const MaskPlan& mask) const {
  if (mask.size() != encoder_.grid().count()) {
    throw Error(ErrorCode::ShapeMismatch, "mask has " + std::to_string(mask.size()) + " positions, patch grid has " +
                                              std::to_string(encoder_.grid().count()));
  }
  return nn::replace_rows(g, encoder_.embed(g, image), mask.masked, g.param(*mask_embedding_));
}

template <typename T>
Var MimModel<T>::forward(Graph<T>& g, const Tensor<T>& image, const MaskPlan& mask, const nn::Mode& mode) const {
  Var h = encoder_.encode_embeddings(g, masked_embeddings(g, image, mask), mode);
  return head_.forward(g, h);
}

template <typename T>
Var mim_loss(Graph<T>& g, Var logits, const vq::TokenGrid& targets, const MaskPlan& mask) {
  const std::size_t n = g.value(logits).rows();
  if (targets.codes.size() != n || mask.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "mim_loss: logits rows " + std::to_string(n) + ", targets " +
                                              std::to_string(targets.codes.size()) + ", mask " +
                                              std::to_string(mask.size()));
  }
  std::vector<int> t(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.masked[i]) t[i] = targets.codes[i];
  }
  return nn::cross_entropy(g, logits, t, -1);
}

nlohmann::json MimEpochLog::to_json() const {
  return {{"epoch", epoch},
          {"loss", loss},
          {"masked_accuracy", masked_accuracy},
          {"heldout_loss", heldout_loss},
          {"lr", lr}};
}

namespace {

void check_targets(const vision::PatchGrid& grid, const std::vector<vq::TokenGrid>& targets, std::size_t n) {
  if (targets.size() != n) {
    throw Error(ErrorCode::ConfigMismatch, "have " + std::to_string(n) + " images but " +
                                               std::to_string(targets.size()) + " token grids");
  }
  for (const auto& t : targets) {
    if (t.rows != grid.rows || t.cols != grid.cols) {
      throw Error(ErrorCode::ConfigMismatch, "token grid " + std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                                                 " vs patch grid " + std::to_string(grid.rows) + "x" +
                                                 std::to_string(grid.cols));
    }
  }
}

}  // namespace

template <typename T>
MimEval evaluate_mim(const MimModel<T>& model, const std::vector<Tensor<T>>& images,
                     const std::vector<vq::TokenGrid>& targets, double ratio, std::uint64_t seed) {
  const auto& grid = model.encoder().grid();
  check_targets(grid, targets, images.size());
  MimEval out;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const MaskPlan mask = sample_mask(grid.rows, grid.cols, ratio, nn::mix_seed({seed, 0x6d, i}));
    Graph<T> g(false);
    Var logits = model.forward(g, images[i], mask, nn::Mode{});
    loss_sum += static_cast<double>(g.value(mim_loss(g, logits, targets[i], mask))[0]);
    const Tensor<T>& lv = g.value(logits);
    for (std::size_t r = 0; r < mask.size(); ++r) {
      if (!mask.masked[r]) continue;
      const T* row = lv.row(r);
      std::size_t best = 0;
      for (std::size_t c = 1; c < lv.cols(); ++c) {
        if (row[c] > row[best]) best = c;
      }
      correct += static_cast<int>(best) == targets[i].codes[r];
      ++out.masked_total;
    }
  }
  if (!images.empty()) out.loss = loss_sum / static_cast<double>(images.size());
  if (out.masked_total > 0) out.masked_accuracy = static_cast<double>(correct) / static_cast<double>(out.masked_total);
  return out;
}

template <typename T>
std::vector<MimEpochLog> pretrain(nn::ParamStore<T>& store, const MimModel<T>& model, const MimConfig& cfg,
                                  const nn::AdamWConfig& optim, const std::vector<Tensor<T>>& train,
                                  const std::vector<vq::TokenGrid>& train_targets,
                                  const std::vector<Tensor<T>>& heldout,
                                  const std::vector<vq::TokenGrid>& heldout_targets, std::uint64_t seed,
                                  const std::function<void(const MimEpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::EmptyCorpus, "pretrain: no training images");
  const auto& grid = model.encoder().grid();
  check_targets(grid, train_targets, train.size());
  check_targets(grid, heldout_targets, heldout.size());

  const auto& sched = cfg.schedule;
  const std::size_t per_epoch = sched.steps_per_epoch(train.size());
  const std::size_t total = per_epoch * sched.epochs;
  nn::AdamW<T> opt(store, optim);
  nn::GradBuffer<T> grads(store);
  std::vector<MimEpochLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto order = nn::shuffled_indices(train.size(), nn::mix_seed({seed, 0x70, epoch}));
    MimEpochLog entry;
    entry.epoch = epoch + 1;
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * sched.batch_size;
      const std::size_t hi = std::min(lo + sched.batch_size, order.size());
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));
      const double lr = nn::schedule_lr(sched, step, total);
      sum += nn::accumulate_step(opt, grads, batch, lr, [&](Graph<T>& g, std::size_t i) {
        // Mask and dropout streams depend only on (seed, epoch, sample).
        const MaskPlan mask = sample_mask(grid.rows, grid.cols, cfg.mask_ratio, nn::mix_seed({seed, epoch, i, 1}));
        std::mt19937_64 rng(nn::mix_seed({seed, epoch, i, 2}));
        Var logits = model.forward(g, train[i], mask, nn::Mode{true, &rng});
        return mim_loss(g, logits, train_targets[i], mask);
      });
      entry.lr = lr;
    }
    entry.loss = sum / static_cast<double>(per_epoch);
    if (!heldout.empty()) {
      const MimEval ev = evaluate_mim(model, heldout, heldout_targets, cfg.mask_ratio, nn::mix_seed({seed, 0x68}));
      entry.masked_accuracy = ev.masked_accuracy;
      entry.heldout_loss = ev.loss;
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

template class MimModel<float>;
template class MimModel<double>;
template Var mim_loss<float>(Graph<float>&, Var, const vq::TokenGrid&, const MaskPlan&);
template Var mim_loss<double>(Graph<double>&, Var, const vq::TokenGrid&, const MaskPlan&);
template MimEval evaluate_mim<float>(const MimModel<float>&, const std::vector<Tensor<float>>&,
                                     const std::vector<vq::TokenGrid>&, double, std::uint64_t);
template MimEval evaluate_mim<double>(const MimModel<double>&, const std::vector<Tensor<double>>&,
                                      const std::vector<vq::TokenGrid>&, double, std::uint64_t);
template std::vector<MimEpochLog> pretrain<float>(nn::ParamStore<float>&, const MimModel<float>&, const MimConfig&,
                                                  const nn::AdamWConfig&, const std::vector<Tensor<float>>&,
                                                  const std::vector<vq::TokenGrid>&,
                                                  const std::vector<Tensor<float>>&,
                                                  const std::vector<vq::TokenGrid>&, std::uint64_t,
                                                  const std::function<void(const MimEpochLog&)>&);
template std::vector<MimEpochLog> pretrain<double>(nn::ParamStore<double>&, const MimModel<double>&,
                                                   const MimConfig&, const nn::AdamWConfig&,
                                                   const std::vector<Tensor<double>>&,
                                                   const std::vector<vq::TokenGrid>&,
                                                   const std::vector<Tensor<double>>&,
                                                   const std::vector<vq::TokenGrid>&, std::uint64_t,
                                                   const std::function<void(const MimEpochLog&)>&);

}  // namespace tsr::mim
