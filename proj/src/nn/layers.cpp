#include "tsr/nn/layers.hpp"

#include <cmath>

namespace tsr::nn {

LayerConfig LayerConfig::desk() {
  LayerConfig c;
  c.d_model = 64;
  c.ffn_dim = 256;
  c.heads = 4;
  c.dropout = 0.1;
  c.enc_layers = 2;
  c.dec_layers = 2;
  return c;
}

void LayerConfig::validate() const {
  if (d_model == 0 || ffn_dim == 0 || heads == 0 || enc_layers == 0 || dec_layers == 0) {
    throw Error(ErrorCode::ConfigError, "layer dimensions must be >= 1");
  }
  if (d_model % heads != 0) {
    throw Error(ErrorCode::ConfigError,
                "d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::ConfigError, "dropout must be in [0, 1)");
}

void to_json(nlohmann::json& j, const LayerConfig& c) {
  j = {{"d_model", c.d_model},       {"ffn_dim", c.ffn_dim},       {"heads", c.heads},
       {"dropout", c.dropout},       {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers}};
}

void from_json(const nlohmann::json& j, LayerConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.heads = j.value("heads", c.heads);
  c.dropout = j.value("dropout", c.dropout);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
}

template <typename T>
Tensor<T> xavier_uniform(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor<T> w({in, out});
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> w(std::move(shape));
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
Var maybe_dropout(Graph<T>& g, Var x, double p, const Mode& mode) {
  if (!mode.train || p <= 0.0) return x;
  if (mode.rng == nullptr) throw Error(ErrorCode::ConfigError, "train mode requires an RNG");
  return dropout(g, x, p, *mode.rng);
}

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                  std::mt19937_64& rng, bool with_bias) {
  weight = &store.add(name + ".weight", xavier_uniform<T>(in, out, rng));
  if (with_bias) bias = &store.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Var Linear<T>::forward(Graph<T>& g, Var x) const {
  Var y = matmul(g, x, g.param(*weight));
  return bias ? add_bias(g, y, g.param(*bias)) : y;
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width) {
  gamma = &store.add(name + ".gamma", Tensor<T>({width}, T{1}));
  beta = &store.add(name + ".beta", Tensor<T>({width}));
}

template <typename T>
Var LayerNorm<T>::forward(Graph<T>& g, Var x) const {
  return layer_norm(g, x, g.param(*gamma), g.param(*beta));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t d,
                                          std::size_t h, std::mt19937_64& rng)
    : heads(h),
      d_model(d),
      q(store, name + ".q", d, d, rng),
      k(store, name + ".k", d, d, rng),
      v(store, name + ".v", d, d, rng),
      o(store, name + ".o", d, d, rng) {}

template <typename T>
Var MultiHeadAttention<T>::forward(Graph<T>& g, Var query_in, Var kv_in, const AttentionMask* mask,
                                   AttentionProbe* probe) const {
  if (g.value(query_in).cols() != d_model || g.value(kv_in).cols() != d_model) {
    throw Error(ErrorCode::ShapeMismatch, "attention input width != d_model " + std::to_string(d_model));
  }
  return attend(g, q.forward(g, query_in), k.forward(g, kv_in), v.forward(g, kv_in), mask, probe);
}

template <typename T>
Var MultiHeadAttention<T>::attend(Graph<T>& g, Var query, Var key, Var value, const AttentionMask* mask,
                                  AttentionProbe* probe) const {
  const std::size_t head_dim = d_model / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? query : slice_cols(g, query, h * head_dim, head_dim);
    Var kh = heads == 1 ? key : slice_cols(g, key, h * head_dim, head_dim);
    Var vh = heads == 1 ? value : slice_cols(g, value, h * head_dim, head_dim);
    Var scores = scale(g, matmul(g, qh, kh, false, true), inv_sqrt);
    Var weights = softmax(g, scores, mask);
    if (probe) probe->push_back(weights);
    outs.push_back(matmul(g, weights, vh));
  }
  Var joined = heads == 1 ? outs[0] : concat_cols(g, outs);
  return o.forward(g, joined);
}

template <typename T>
FeedForward<T>::FeedForward(ParamStore<T>& store, const std::string& name, std::size_t d_model,
                            std::size_t ffn_dim, double p, std::mt19937_64& rng)
    : up(store, name + ".up", d_model, ffn_dim, rng), down(store, name + ".down", ffn_dim, d_model, rng), dropout(p) {}

template <typename T>
Var FeedForward<T>::forward(Graph<T>& g, Var x, const Mode& mode) const {
  Var h = gelu(g, up.forward(g, x));
  h = maybe_dropout(g, h, dropout, mode);
  return down.forward(g, h);
}

template <typename T>
EncoderLayer<T>::EncoderLayer(ParamStore<T>& store, const std::string& name, const LayerConfig& cfg,
                              std::mt19937_64& rng)
    : norm1(store, name + ".norm1", cfg.d_model),
      norm2(store, name + ".norm2", cfg.d_model),
      attn(store, name + ".attn", cfg.d_model, cfg.heads, rng),
      ffn(store, name + ".ffn", cfg.d_model, cfg.ffn_dim, cfg.dropout, rng),
      dropout(cfg.dropout) {}

template <typename T>
Var EncoderLayer<T>::forward(Graph<T>& g, Var x, const Mode& mode, const AttentionMask* mask) const {
  Var h = norm1.forward(g, x);
  x = add(g, x, maybe_dropout(g, attn.forward(g, h, h, mask), dropout, mode));
  h = norm2.forward(g, x);
  return add(g, x, maybe_dropout(g, ffn.forward(g, h, mode), dropout, mode));
}

template <typename T>
DecoderLayer<T>::DecoderLayer(ParamStore<T>& store, const std::string& name, const LayerConfig& cfg,
                              std::mt19937_64& rng)
    : norm1(store, name + ".norm1", cfg.d_model),
      norm2(store, name + ".norm2", cfg.d_model),
      norm3(store, name + ".norm3", cfg.d_model),
      self_attn(store, name + ".self_attn", cfg.d_model, cfg.heads, rng),
      cross_attn(store, name + ".cross_attn", cfg.d_model, cfg.heads, rng),
      ffn(store, name + ".ffn", cfg.d_model, cfg.ffn_dim, cfg.dropout, rng),
      dropout(cfg.dropout) {}

template <typename T>
Var DecoderLayer<T>::forward(Graph<T>& g, Var x, Var memory, const Mode& mode, AttentionProbe* self_probe) const {
  const AttentionMask causal = AttentionMask::causal(g.value(x).rows());
  Var h = norm1.forward(g, x);
  x = add(g, x, maybe_dropout(g, self_attn.forward(g, h, h, &causal, self_probe), dropout, mode));
  h = norm2.forward(g, x);
  x = add(g, x, maybe_dropout(g, cross_attn.forward(g, h, memory, nullptr), dropout, mode));
  h = norm3.forward(g, x);
  return add(g, x, maybe_dropout(g, ffn.forward(g, h, mode), dropout, mode));
}

template <typename T>
Var DecoderLayer<T>::step(Graph<T>& g, Var x_row, Var memory_keys, Var memory_values, KvCache<T>& cache) const {
  const Mode eval;
  Var h = norm1.forward(g, x_row);
  const Tensor<T> k_new = g.value(self_attn.project_key(g, h));
  const Tensor<T> v_new = g.value(self_attn.project_value(g, h));
  if (cache.keys.empty()) {
    cache.keys = k_new;
    cache.values = v_new;
  } else {
    cache.keys = g.value(concat_rows(g, g.constant(cache.keys), g.constant(k_new)));
    cache.values = g.value(concat_rows(g, g.constant(cache.values), g.constant(v_new)));
  }
  Var sa = self_attn.attend(g, self_attn.project_query(g, h), g.constant(cache.keys), g.constant(cache.values),
                            nullptr);
  x_row = add(g, x_row, sa);
  h = norm2.forward(g, x_row);
  x_row = add(g, x_row, cross_attn.attend(g, cross_attn.project_query(g, h), memory_keys, memory_values, nullptr));
  h = norm3.forward(g, x_row);
  return add(g, x_row, ffn.forward(g, h, eval));
}

#define TSR_INSTANTIATE_LAYERS(T)                                                                 \
  template Tensor<T> xavier_uniform<T>(std::size_t, std::size_t, std::mt19937_64&);              \
  template Tensor<T> normal_init<T>(Shape, double, std::mt19937_64&);                            \
  template Var maybe_dropout<T>(Graph<T>&, Var, double, const Mode&);                            \
  template class Linear<T>;                                                                      \
  template class LayerNorm<T>;                                                                   \
  template class MultiHeadAttention<T>;                                                          \
  template class FeedForward<T>;                                                                 \
  template class EncoderLayer<T>;                                                                \
  template class DecoderLayer<T>;

TSR_INSTANTIATE_LAYERS(float)
TSR_INSTANTIATE_LAYERS(double)

}  // namespace tsr::nn
