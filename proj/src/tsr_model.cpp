#include "tsr/tsr_model.hpp"

#include <cmath>

namespace tsr::model {

namespace tok = grammar::tok;

std::string_view schedule_name(Schedule s) { return s == Schedule::Frozen ? "frozen" : "full"; }

Schedule parse_schedule(std::string_view s) {
  if (s == "frozen") return Schedule::Frozen;
  if (s == "full") return Schedule::Full;
  throw Error(ErrorCode::ConfigError, "schedule must be frozen|full, got '" + std::string(s) + "'");
}

template <typename T>
TsrModel<T>::TsrModel(nn::ParamStore<T>& store, const nn::LayerConfig& cfg, const vision::PatchGrid& grid,
                      std::mt19937_64& rng)
    : cfg_(cfg) {
  encoder_ = vision::VisualEncoder<T>(store, "encoder", cfg, grid, rng);
  token_embedding_ =
      &store.add("decoder.token_embedding", nn::normal_init<T>({grammar::kVocabSize, cfg.d_model}, 0.02, rng));
  position_embedding_ =
      &store.add("decoder.position_embedding", nn::normal_init<T>({kMaxSequence, cfg.d_model}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    layers_.emplace_back(store, "decoder.layer" + std::to_string(i), cfg, rng);
  }
  norm_ = nn::LayerNorm<T>(store, "decoder.norm", cfg.d_model);
  out_ = nn::Linear<T>(store, "decoder.out", cfg.d_model, grammar::kVocabSize, rng);
}

template <typename T>
Var TsrModel<T>::encode(Graph<T>& g, const Tensor<T>& image, const nn::Mode& mode) const {
  return encoder_.encode(g, image, mode);
}

namespace {

void check_framed(const TokenSeq& gt) {
  if (gt.ids.size() > kMaxSequence) {
    throw Error(ErrorCode::SequenceTooLong, "sequence of " + std::to_string(gt.ids.size()) +
                                                " tokens exceeds the decoder limit of " +
                                                std::to_string(kMaxSequence));
  }
  if (gt.ids.size() < 2 || gt.ids.front() != tok::kSos) {
    throw MalformedStructure(0, "teacher forcing needs a framed sequence of at least <sos> <eos>");
  }
}

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
  return v;
}

}  // namespace

template <typename T>
Var TsrModel<T>::decode_teacher_forcing(Graph<T>& g, Var features, const TokenSeq& gt, const nn::Mode& mode,
                                        nn::AttentionProbe* self_probe) const {
  check_framed(gt);
  const std::size_t steps = gt.ids.size() - 1;
  std::vector<int> inputs(gt.ids.begin(), gt.ids.begin() + static_cast<long>(steps));
  Var x = nn::add(g, nn::gather_rows(g, g.param(*token_embedding_), inputs),
                  nn::gather_rows(g, g.param(*position_embedding_), iota_ids(steps)));
  x = nn::maybe_dropout(g, x, cfg_.dropout, mode);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(g, x, features, mode, i == 0 ? self_probe : nullptr);
  }
  return out_.forward(g, norm_.forward(g, x));
}

template <typename T>
Var TsrModel<T>::forward(Graph<T>& g, const Tensor<T>& image, const TokenSeq& gt, const nn::Mode& mode) const {
  return decode_teacher_forcing(g, encode(g, image, mode), gt, mode);
}

template <typename T>
std::unique_ptr<typename TsrModel<T>::Session> TsrModel<T>::start(const Tensor<T>& features) const {
  return std::make_unique<Session>(*this, features);
}

template <typename T>
TsrModel<T>::Session::Session(const TsrModel<T>& model, const Tensor<T>& features) : model_(model) {
  Graph<T> g(false);
  Var mem = g.constant(features);
  for (const auto& layer : model.layers_) {
    memory_keys_.push_back(g.value(layer.cross_attn.project_key(g, mem)));
    memory_values_.push_back(g.value(layer.cross_attn.project_value(g, mem)));
  }
  caches_.resize(model.layers_.size());
}

template <typename T>
std::vector<double> TsrModel<T>::Session::next(TokenId input) {
  if (position_ >= kMaxSequence) {
    throw Error(ErrorCode::SequenceTooLong, "decoder has no position beyond " + std::to_string(kMaxSequence));
  }
  Graph<T> g(false);
  Var x = nn::add(g, nn::gather_rows(g, g.param(*model_.token_embedding_), {static_cast<int>(input)}),
                  nn::gather_rows(g, g.param(*model_.position_embedding_), {static_cast<int>(position_)}));
  for (std::size_t i = 0; i < model_.layers_.size(); ++i) {
    x = model_.layers_[i].step(g, x, g.constant(memory_keys_[i]), g.constant(memory_values_[i]), caches_[i]);
  }
  const Tensor<T>& logits = g.value(model_.out_.forward(g, model_.norm_.forward(g, x)));
  ++position_;
  return std::vector<double>(logits.values().begin(), logits.values().end());
}

template <typename T>
Var structure_loss(Graph<T>& g, Var logits, const TokenSeq& gt) {
  check_framed(gt);
  const std::size_t rows = g.value(logits).rows();
  if (rows != gt.ids.size() - 1) {
    throw Error(ErrorCode::ShapeMismatch, "structure_loss: " + std::to_string(rows) + " logit rows for " +
                                              std::to_string(gt.ids.size()) + " tokens");
  }
  std::vector<int> targets(gt.ids.begin() + 1, gt.ids.end());
  return nn::cross_entropy(g, logits, targets, static_cast<int>(tok::kPad));
}

TokenSeq greedy_decode(StepScorer& scorer, std::size_t max_len) {
  if (max_len < 1 || max_len > kMaxSequence) {
    throw Error(ErrorCode::ConfigError, "max_len must be in [1, " + std::to_string(kMaxSequence) + "]");
  }
  TokenSeq out;
  out.framed = true;
  out.ids.push_back(tok::kSos);
  while (out.ids.size() < max_len) {
    const std::vector<double> logits = scorer.next(out.ids.back());
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    out.ids.push_back(static_cast<TokenId>(best));
    if (best == tok::kEos) break;
  }
  return out;
}

template <typename T>
TokenSeq greedy_decode(const TsrModel<T>& model, const Tensor<T>& image, std::size_t max_len) {
  Graph<T> g(false);
  const Tensor<T> features = g.value(model.encode(g, image, nn::Mode{}));
  auto session = model.start(features);
  return greedy_decode(*session, max_len);
}

void FinetuneConfig::validate() const {
  full.validate("finetune.full");
  frozen.validate("finetune.frozen");
  if (val_every == 0) throw Error(ErrorCode::ConfigError, "finetune.val_every must be >= 1");
}

void to_json(nlohmann::json& j, const FinetuneConfig& c) {
  j = {{"full", c.full}, {"frozen", c.frozen}, {"val_every", c.val_every}};
}

void from_json(const nlohmann::json& j, FinetuneConfig& c) {
  if (j.contains("full")) from_json(j.at("full"), c.full);
  if (j.contains("frozen")) from_json(j.at("frozen"), c.frozen);
  c.val_every = j.value("val_every", c.val_every);
}

nlohmann::json FinetuneEpochLog::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"loss", loss}, {"lr", lr}};
  if (val) {
    j["teds_simple"] = val->mean_simple ? nlohmann::json(*val->mean_simple) : nlohmann::json();
    j["teds_complex"] = val->mean_complex ? nlohmann::json(*val->mean_complex) : nlohmann::json();
    j["teds_all"] = val->mean_all;
  }
  return j;
}

namespace {

template <typename T>
Tensor<T> as(const Tensor<float>& x) {
  if constexpr (std::is_same_v<T, float>) {
    return x;
  } else {
    return x.template cast<T>();
  }
}

}  // namespace

template <typename T>
teds::TedsReport evaluate(const TsrModel<T>& model, const std::vector<Example>& data,
                          std::vector<TokenSeq>* predictions) {
  std::vector<teds::EvalPair> pairs;
  pairs.reserve(data.size());
  for (const auto& ex : data) {
    TokenSeq pred = greedy_decode(model, as<T>(ex.image));
    if (predictions) predictions->push_back(pred);
    pairs.push_back(teds::EvalPair{ex.id, std::move(pred), ex.tokens});
  }
  return teds::evaluate_corpus(pairs);
}

template <typename T>
std::vector<FinetuneEpochLog> finetune(nn::ParamStore<T>& store, const TsrModel<T>& model, Schedule mode,
                                       const FinetuneConfig& cfg, const nn::AdamWConfig& optim,
                                       const std::vector<Example>& train, const std::vector<Example>& val,
                                       std::uint64_t seed, const std::function<void(const FinetuneEpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::EmptyCorpus, "finetune: no training examples");
  for (const auto& ex : train) check_framed(ex.tokens);

  store.set_trainable("encoder.", mode == Schedule::Full);
  // A frozen encoder runs as a fixed feature extractor (eval mode), so its
  // outputs are computed once.
  std::vector<Tensor<T>> cached;
  if (mode == Schedule::Frozen) {
    cached.reserve(train.size());
    for (const auto& ex : train) {
      Graph<T> g(false);
      cached.push_back(g.value(model.encode(g, as<T>(ex.image), nn::Mode{})));
    }
  }

  const auto& sched = cfg.schedule(mode);
  const std::size_t per_epoch = sched.steps_per_epoch(train.size());
  const std::size_t total = per_epoch * sched.epochs;
  nn::AdamW<T> opt(store, optim);
  nn::GradBuffer<T> grads(store);
  std::vector<FinetuneEpochLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto order = nn::shuffled_indices(train.size(), nn::mix_seed({seed, 0x66, epoch}));
    FinetuneEpochLog entry;
    entry.epoch = epoch + 1;
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * sched.batch_size;
      const std::size_t hi = std::min(lo + sched.batch_size, order.size());
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));
      const double lr = nn::schedule_lr(sched, step, total);
      sum += nn::accumulate_step(opt, grads, batch, lr, [&](Graph<T>& g, std::size_t i) {
        std::mt19937_64 rng(nn::mix_seed({seed, epoch, i, 3}));
        const nn::Mode train_mode{true, &rng};
        Var features = mode == Schedule::Frozen ? g.constant(cached[i])
                                                : model.encode(g, as<T>(train[i].image), train_mode);
        Var logits = model.decode_teacher_forcing(g, features, train[i].tokens, train_mode);
        return structure_loss(g, logits, train[i].tokens);
      });
      entry.lr = lr;
    }
    entry.loss = sum / static_cast<double>(per_epoch);
    const bool last = epoch + 1 == sched.epochs;
    if (!val.empty() && (last || (epoch + 1) % cfg.val_every == 0)) entry.val = evaluate(model, val);
    log.push_back(std::move(entry));
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

#define TSR_INSTANTIATE_MODEL(T)                                                                                     \
  template class TsrModel<T>;                                                                                        \
  template Var structure_loss<T>(Graph<T>&, Var, const TokenSeq&);                                                   \
  template TokenSeq greedy_decode<T>(const TsrModel<T>&, const Tensor<T>&, std::size_t);                             \
  template teds::TedsReport evaluate<T>(const TsrModel<T>&, const std::vector<Example>&, std::vector<TokenSeq>*);    \
  template std::vector<FinetuneEpochLog> finetune<T>(nn::ParamStore<T>&, const TsrModel<T>&, Schedule,               \
                                                     const FinetuneConfig&, const nn::AdamWConfig&,                  \
                                                     const std::vector<Example>&, const std::vector<Example>&,       \
                                                     std::uint64_t, const std::function<void(const FinetuneEpochLog&)>&);

TSR_INSTANTIATE_MODEL(float)
TSR_INSTANTIATE_MODEL(double)

}  // namespace tsr::model
