#include "tsr/vqvae.hpp"

#include <cmath>

namespace tsr::vq {

VqvaeConfig VqvaeConfig::desk() {
  VqvaeConfig c;
  c.codebook_size = 64;
  c.code_dim = 32;
  c.hidden = 128;
  c.kl_weight = 0.05;
  c.schedule = nn::PhaseSchedule{12, 16, 2e-3, 0.05};
  return c;
}

void VqvaeConfig::validate() const {
  if (codebook_size < 2) throw Error(ErrorCode::ConfigError, "vqvae.codebook_size must be >= 2");
  if (code_dim < 1 || hidden < 1) throw Error(ErrorCode::ConfigError, "vqvae dims must be >= 1");
  if (!(kl_weight >= 0.0)) throw Error(ErrorCode::ConfigError, "vqvae.kl_weight must be >= 0");
  if (!(tau_start > 0.0) || !(tau_end > 0.0)) {
    throw Error(ErrorCode::InvalidTemperature, "vqvae temperatures must be > 0");
  }
  schedule.validate("vqvae");
}

void to_json(nlohmann::json& j, const VqvaeConfig& c) {
  j = {{"codebook_size", c.codebook_size},
       {"code_dim", c.code_dim},
       {"hidden", c.hidden},
       {"tau_start", c.tau_start},
       {"tau_end", c.tau_end},
       {"hard", c.hard},
       {"kl_weight", c.kl_weight},
       {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, VqvaeConfig& c) {
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.code_dim = j.value("code_dim", c.code_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.tau_start = j.value("tau_start", c.tau_start);
  c.tau_end = j.value("tau_end", c.tau_end);
  c.hard = j.value("hard", c.hard);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
}

nlohmann::json TokenGrid::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    rows_json.push_back(std::vector<int>(codes.begin() + static_cast<long>(r * cols),
                                         codes.begin() + static_cast<long>((r + 1) * cols)));
  }
  return rows_json;
}

TokenGrid TokenGrid::from_json(const nlohmann::json& j) {
  TokenGrid t;
  t.rows = j.size();
  for (const auto& row : j) {
    auto v = row.get<std::vector<int>>();
    if (t.cols == 0) t.cols = v.size();
    if (v.size() != t.cols) throw Error(ErrorCode::ShapeMismatch, "ragged token grid");
    t.codes.insert(t.codes.end(), v.begin(), v.end());
  }
  return t;
}

namespace {

// Uniform in (0, 1) from the raw 64-bit stream, never hitting either end.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* row = x.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < x.cols(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

template <typename T>
Var gumbel_softmax(Graph<T>& g, Var logits, double tau, bool hard, std::mt19937_64& rng) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::InvalidTemperature, "gumbel_softmax needs tau > 0, got " + std::to_string(tau));
  }
  const Tensor<T>& lv = g.value(logits);
  Tensor<T> noise(lv.shape());
  for (auto& v : noise.values()) v = static_cast<T>(-std::log(-std::log(open_uniform(rng))));
  Var y = nn::softmax(g, nn::scale(g, nn::add(g, logits, g.constant(std::move(noise))), static_cast<T>(1.0 / tau)));
  if (!hard) return y;
  const Tensor<T>& soft = g.value(y);
  Tensor<T> onehot(soft.shape());
  const auto idx = argmax_rows(soft);
  for (std::size_t r = 0; r < idx.size(); ++r) onehot.at(r, static_cast<std::size_t>(idx[r])) = T{1};
  return nn::straight_through(g, y, std::move(onehot));
}

template <typename T>
Tensor<T> gumbel_softmax(const Tensor<T>& logits, double tau, bool hard, std::mt19937_64& rng) {
  Graph<T> g(false);
  return g.value(gumbel_softmax(g, g.constant(logits), tau, hard, rng));
}

double temperature_at(const VqvaeConfig& c, std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return c.tau_end;
  const double t = static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
  return c.tau_start * std::pow(c.tau_end / c.tau_start, t);
}

template <typename T>
Vqvae<T>::Vqvae(nn::ParamStore<T>& store, const VqvaeConfig& cfg, const vision::PatchGrid& grid,
                std::mt19937_64& rng)
    : cfg_(cfg), grid_(grid) {
  cfg.validate();
  enc1_ = nn::Linear<T>(store, "vqvae.enc1", grid.patch_dim(), cfg.hidden, rng);
  enc2_ = nn::Linear<T>(store, "vqvae.enc2", cfg.hidden, cfg.hidden, rng);
  enc_out_ = nn::Linear<T>(store, "vqvae.enc_out", cfg.hidden, cfg.codebook_size, rng);
  codebook_ = &store.add("vqvae.codebook", nn::normal_init<T>({cfg.codebook_size, cfg.code_dim}, 1.0, rng));
  dec1_ = nn::Linear<T>(store, "vqvae.dec1", cfg.code_dim, cfg.hidden, rng);
  dec2_ = nn::Linear<T>(store, "vqvae.dec2", cfg.hidden, cfg.hidden, rng);
  dec_out_ = nn::Linear<T>(store, "vqvae.dec_out", cfg.hidden, grid.patch_dim(), rng);
}

template <typename T>
Var Vqvae<T>::logits(Graph<T>& g, const Tensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != grid_.height() || image.dim(1) != grid_.width() ||
      image.dim(2) != grid_.channels) {
    throw Error(ErrorCode::ShapeMismatch, "vqvae expects image [" + std::to_string(grid_.height()) + "," +
                                              std::to_string(grid_.width()) + "," + std::to_string(grid_.channels) +
                                              "], got " + nn::shape_str(image.shape()));
  }
  Var x = g.constant(vision::patchify(image, grid_.patch));
  x = nn::relu(g, enc1_.forward(g, x));
  x = nn::relu(g, enc2_.forward(g, x));
  return enc_out_.forward(g, x);
}

template <typename T>
Var Vqvae<T>::decode(Graph<T>& g, Var code_weights) const {
  Var z = nn::matmul(g, code_weights, g.param(*codebook_));
  z = nn::relu(g, dec1_.forward(g, z));
  z = nn::relu(g, dec2_.forward(g, z));
  return dec_out_.forward(g, z);
}

template <typename T>
Var Vqvae<T>::loss(Graph<T>& g, const Tensor<T>& image, double tau, std::mt19937_64& rng) const {
  Var l = logits(g, image);
  Var w = gumbel_softmax(g, l, tau, cfg_.hard, rng);
  Var rec = nn::mse(g, decode(g, w), g.constant(vision::patchify(image, grid_.patch)));
  if (cfg_.kl_weight == 0.0) return rec;
  return nn::add(g, rec, nn::scale(g, nn::kl_to_uniform(g, l), static_cast<T>(cfg_.kl_weight)));
}

template <typename T>
TokenGrid Vqvae<T>::tokenize(const Tensor<T>& image) const {
  Graph<T> g(false);
  Var l = logits(g, image);
  return TokenGrid{grid_.rows, grid_.cols, argmax_rows(g.value(l))};
}

template <typename T>
Tensor<T> Vqvae<T>::reconstruct(const TokenGrid& tokens) const {
  if (tokens.rows != grid_.rows || tokens.cols != grid_.cols || tokens.codes.size() != grid_.count()) {
    throw Error(ErrorCode::ShapeMismatch, "token grid " + std::to_string(tokens.rows) + "x" +
                                              std::to_string(tokens.cols) + " does not match patch grid " +
                                              std::to_string(grid_.rows) + "x" + std::to_string(grid_.cols));
  }
  Tensor<T> onehot({grid_.count(), cfg_.codebook_size});
  for (std::size_t i = 0; i < tokens.codes.size(); ++i) {
    const int c = tokens.codes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= cfg_.codebook_size) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "code " + std::to_string(c) + " outside [0, " + std::to_string(cfg_.codebook_size) + ")");
    }
    onehot.at(i, static_cast<std::size_t>(c)) = T{1};
  }
  Graph<T> g(false);
  Var patches = decode(g, g.constant(std::move(onehot)));
  return vision::unpatchify(g.value(patches), grid_);
}

template <typename T>
double vqvae_train_step(const Vqvae<T>& model, nn::AdamW<T>& opt, nn::GradBuffer<T>& grads,
                        const std::vector<Tensor<T>>& images, const std::vector<std::size_t>& batch, double tau,
                        double lr, std::uint64_t step_seed) {
  return nn::accumulate_step(opt, grads, batch, lr, [&](Graph<T>& g, std::size_t i) {
    std::mt19937_64 rng(nn::mix_seed({step_seed, i}));
    return model.loss(g, images.at(i), tau, rng);
  });
}

nlohmann::json VqvaeEpochLog::to_json() const {
  return {{"epoch", epoch}, {"loss", loss}, {"tau", tau}, {"lr", lr}};
}

template <typename T>
std::vector<VqvaeEpochLog> train_vqvae(nn::ParamStore<T>& store, const Vqvae<T>& model,
                                       const std::vector<Tensor<T>>& images, const nn::AdamWConfig& optim,
                                       std::uint64_t seed, const std::function<void(const VqvaeEpochLog&)>& on_epoch) {
  if (images.empty()) throw Error(ErrorCode::EmptyCorpus, "train_vqvae: no images");
  const auto& sched = model.config().schedule;
  const std::size_t per_epoch = sched.steps_per_epoch(images.size());
  const std::size_t total = per_epoch * sched.epochs;
  nn::AdamW<T> opt(store, optim);
  nn::GradBuffer<T> grads(store);
  std::vector<VqvaeEpochLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto order = nn::shuffled_indices(images.size(), nn::mix_seed({seed, 0x76, epoch}));
    VqvaeEpochLog entry;
    entry.epoch = epoch + 1;
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * sched.batch_size;
      const std::size_t hi = std::min(lo + sched.batch_size, order.size());
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));
      const double tau = temperature_at(model.config(), step, total);
      const double lr = nn::schedule_lr(sched, step, total);
      sum += vqvae_train_step(model, opt, grads, images, batch, tau, lr, nn::mix_seed({seed, 0x71, step}));
      entry.tau = tau;
      entry.lr = lr;
    }
    entry.loss = sum / static_cast<double>(per_epoch);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

template Var gumbel_softmax<float>(Graph<float>&, Var, double, bool, std::mt19937_64&);
template Var gumbel_softmax<double>(Graph<double>&, Var, double, bool, std::mt19937_64&);
template Tensor<float> gumbel_softmax<float>(const Tensor<float>&, double, bool, std::mt19937_64&);
template Tensor<double> gumbel_softmax<double>(const Tensor<double>&, double, bool, std::mt19937_64&);
template class Vqvae<float>;
template class Vqvae<double>;
template double vqvae_train_step<float>(const Vqvae<float>&, nn::AdamW<float>&, nn::GradBuffer<float>&,
                                        const std::vector<Tensor<float>>&, const std::vector<std::size_t>&, double,
                                        double, std::uint64_t);
template double vqvae_train_step<double>(const Vqvae<double>&, nn::AdamW<double>&, nn::GradBuffer<double>&,
                                         const std::vector<Tensor<double>>&, const std::vector<std::size_t>&, double,
                                         double, std::uint64_t);
template std::vector<VqvaeEpochLog> train_vqvae<float>(nn::ParamStore<float>&, const Vqvae<float>&,
                                                       const std::vector<Tensor<float>>&, const nn::AdamWConfig&,
                                                       std::uint64_t,
                                                       const std::function<void(const VqvaeEpochLog&)>&);
template std::vector<VqvaeEpochLog> train_vqvae<double>(nn::ParamStore<double>&, const Vqvae<double>&,
                                                        const std::vector<Tensor<double>>&, const nn::AdamWConfig&,
                                                        std::uint64_t,
                                                        const std::function<void(const VqvaeEpochLog&)>&);

}  // namespace tsr::vq
