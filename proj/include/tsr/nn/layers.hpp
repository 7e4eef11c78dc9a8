#pragma once

// Parameterized building blocks: linear, layer norm, embedding, multi-head
// attention, and pre-norm transformer encoder/decoder layers.

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/nn/ops.hpp"

namespace tsr::nn {

struct LayerConfig {
  std::size_t d_model = 768;
  std::size_t ffn_dim = 3072;
  std::size_t heads = 12;
  double dropout = 0.5;
  std::size_t enc_layers = 12;
  std::size_t dec_layers = 4;

  /// Small profile used for desk-scale training runs.
  static LayerConfig desk();
  /// Throws Error(ConfigError) on a violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const LayerConfig& c);
void from_json(const nlohmann::json& j, LayerConfig& c);

/// Train mode enables dropout and needs an RNG; eval mode is deterministic.
struct Mode {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

template <typename T>
Var maybe_dropout(Graph<T>& g, Var x, double p, const Mode& mode);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
         bool bias = true);

  Var forward(Graph<T>& g, Var x) const;

  Parameter<T>* weight = nullptr;  // [in, out]
  Parameter<T>* bias = nullptr;    // [out]
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width);

  Var forward(Graph<T>& g, Var x) const;

  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
};

/// Optional per-head attention weights, filled when requested.
using AttentionProbe = std::vector<Var>;

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t d_model, std::size_t heads,
                     std::mt19937_64& rng);

  Var forward(Graph<T>& g, Var query_in, Var kv_in, const AttentionMask* mask,
              AttentionProbe* probe = nullptr) const;

  Var project_query(Graph<T>& g, Var x) const { return q.forward(g, x); }
  Var project_key(Graph<T>& g, Var x) const { return k.forward(g, x); }
  Var project_value(Graph<T>& g, Var x) const { return v.forward(g, x); }

  /// Scaled dot-product attention over already-projected Q/K/V, followed by
  /// the output projection.
  Var attend(Graph<T>& g, Var query, Var key, Var value, const AttentionMask* mask,
             AttentionProbe* probe = nullptr) const;

  std::size_t heads = 1;
  std::size_t d_model = 0;
  Linear<T> q, k, v, o;
};

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& name, std::size_t d_model, std::size_t ffn_dim,
              double dropout, std::mt19937_64& rng);

  Var forward(Graph<T>& g, Var x, const Mode& mode) const;

  Linear<T> up, down;
  double dropout = 0.0;
};

template <typename T>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParamStore<T>& store, const std::string& name, const LayerConfig& cfg, std::mt19937_64& rng);

  Var forward(Graph<T>& g, Var x, const Mode& mode, const AttentionMask* mask = nullptr) const;

  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  double dropout = 0.0;
};

/// Self-attention key/value rows accumulated during incremental decoding.
template <typename T>
struct KvCache {
  Tensor<T> keys;    // [t, d_model], empty before the first step
  Tensor<T> values;
};

template <typename T>
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParamStore<T>& store, const std::string& name, const LayerConfig& cfg, std::mt19937_64& rng);

  /// Full-sequence pass with a causal self-attention mask.
  Var forward(Graph<T>& g, Var x, Var memory, const Mode& mode, AttentionProbe* self_probe = nullptr) const;

  /// One new position. `memory_keys` / `memory_values` are the projected
  /// cross-attention inputs; `cache` grows by one row.
  Var step(Graph<T>& g, Var x_row, Var memory_keys, Var memory_values, KvCache<T>& cache) const;

  LayerNorm<T> norm1, norm2, norm3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;
  double dropout = 0.0;
};

/// Weight init shared by the models: Xavier-uniform for linear weights.
template <typename T>
Tensor<T> xavier_uniform(std::size_t in, std::size_t out, std::mt19937_64& rng);
template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace tsr::nn
