#pragma once

// Image-to-sequence structure recognizer: the visual encoder plus a causal
// transformer decoder over the 32-token structure vocabulary.

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/grammar.hpp"
#include "tsr/nn/trainer.hpp"
#include "tsr/teds.hpp"
#include "tsr/visual_encoder.hpp"

namespace tsr::model {

using grammar::TokenId;
using grammar::TokenSeq;
using nn::Graph;
using nn::Tensor;
using nn::Var;

inline constexpr std::size_t kMaxSequence = 512;

enum class Init { Scratch, PretrainedEncoder };
enum class Schedule { Frozen, Full };

std::string_view schedule_name(Schedule s);
Schedule parse_schedule(std::string_view s);  // "frozen" | "full"

template <typename T>
class TsrModel {
 public:
  TsrModel() = default;
  /// Encoder parameters under "encoder.", everything else under "decoder.".
  TsrModel(nn::ParamStore<T>& store, const nn::LayerConfig& cfg, const vision::PatchGrid& grid, std::mt19937_64& rng);

  Var encode(Graph<T>& g, const Tensor<T>& image, const nn::Mode& mode) const;

  /// Logits [n-1, 32]: row i predicts gt[i+1] from gt[0..i] and the features.
  /// Throws Error(SequenceTooLong) for n > 512 and MalformedStructure for an
  /// unframed or too short sequence.
  Var decode_teacher_forcing(Graph<T>& g, Var features, const TokenSeq& gt, const nn::Mode& mode,
                             nn::AttentionProbe* self_probe = nullptr) const;

  Var forward(Graph<T>& g, const Tensor<T>& image, const TokenSeq& gt, const nn::Mode& mode) const;

  const vision::VisualEncoder<T>& encoder() const { return encoder_; }
  const nn::LayerConfig& config() const { return cfg_; }

  /// Incremental decoding state over fixed encoder features.
  class Session;
  std::unique_ptr<Session> start(const Tensor<T>& features) const;

 private:
  friend class Session;
  nn::LayerConfig cfg_;
  vision::VisualEncoder<T> encoder_;
  nn::Parameter<T>* token_embedding_ = nullptr;     // [32, d]
  nn::Parameter<T>* position_embedding_ = nullptr;  // [512, d]
  std::vector<nn::DecoderLayer<T>> layers_;
  nn::LayerNorm<T> norm_;
  nn::Linear<T> out_;
};

/// Anything that returns next-token logits after being fed one more token.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::vector<double> next(TokenId input) = 0;
};

template <typename T>
class TsrModel<T>::Session : public StepScorer {
 public:
  Session(const TsrModel<T>& model, const Tensor<T>& features);
  std::vector<double> next(TokenId input) override;

 private:
  const TsrModel<T>& model_;
  std::vector<Tensor<T>> memory_keys_, memory_values_;
  std::vector<nn::KvCache<T>> caches_;
  std::size_t position_ = 0;
};

/// -(1/m) * sum of log p(gt[i] | gt[<i]) over i >= 1 with gt[i] != <pad>.
/// Throws Error(AllIgnored) when nothing contributes.
template <typename T>
Var structure_loss(Graph<T>& g, Var logits, const TokenSeq& gt);

/// Starts from <sos>, appends the argmax (lowest id on ties) until <eos> or
/// `max_len` tokens in total.
TokenSeq greedy_decode(StepScorer& scorer, std::size_t max_len = kMaxSequence);

template <typename T>
TokenSeq greedy_decode(const TsrModel<T>& model, const Tensor<T>& image, std::size_t max_len = kMaxSequence);

struct FinetuneConfig {
  nn::PhaseSchedule full{15, 16, 1e-3, 0.1};
  nn::PhaseSchedule frozen{5, 16, 1e-3, 0.1};
  /// Validate every this many epochs (and always after the last one).
  std::size_t val_every = 5;

  const nn::PhaseSchedule& schedule(Schedule s) const { return s == Schedule::Frozen ? frozen : full; }
  void validate() const;
};

void to_json(nlohmann::json& j, const FinetuneConfig& c);
void from_json(const nlohmann::json& j, FinetuneConfig& c);

struct Example {
  std::string id;
  Tensor<float> image;  // normalized
  TokenSeq tokens;      // framed
};

struct FinetuneEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<teds::TedsReport> val;
  nlohmann::json to_json() const;
};

/// Greedy-decodes every example and scores it against its labels.
template <typename T>
teds::TedsReport evaluate(const TsrModel<T>& model, const std::vector<Example>& data,
                          std::vector<TokenSeq>* predictions = nullptr);

/// Teacher-forced training. In Frozen mode every "encoder." parameter is
/// marked non-trainable before the optimizer is built, so neither gradients
/// nor moment buffers exist for it and it stays bit-identical.
template <typename T>
std::vector<FinetuneEpochLog> finetune(nn::ParamStore<T>& store, const TsrModel<T>& model, Schedule mode,
                                       const FinetuneConfig& cfg, const nn::AdamWConfig& optim,
                                       const std::vector<Example>& train, const std::vector<Example>& val,
                                       std::uint64_t seed,
                                       const std::function<void(const FinetuneEpochLog&)>& on_epoch = {});

}  // namespace tsr::model
