#pragma once

// Differentiable ops on rank-2 tensors ([rows, cols]); rank-1 tensors are
// treated as a single row where noted.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tsr/nn/graph.hpp"

namespace tsr::nn {

/// blocked[r * cols + c] != 0 means query r may not attend to key c.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> blocked;

  static AttentionMask causal(std::size_t n);
  /// Blocks keys whose flag in `key_padding` is set, for every query row.
  static AttentionMask key_padding(std::size_t rows, const std::vector<std::uint8_t>& key_padding);
};

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, bool trans_a = false, bool trans_b = false);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

template <typename T>
Var mul(Graph<T>& g, Var a, Var b);

/// x[m, n] + bias[n] broadcast over rows.
template <typename T>
Var add_bias(Graph<T>& g, Var x, Var bias);

template <typename T>
Var scale(Graph<T>& g, Var x, T s);

template <typename T>
Var gelu(Graph<T>& g, Var x);

template <typename T>
Var relu(Graph<T>& g, Var x);

/// Row-wise layer normalization with affine gamma/beta of width cols.
template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, T eps = T(1e-5));

/// Row-wise softmax; blocked entries get exactly zero weight.
template <typename T>
Var softmax(Graph<T>& g, Var x, const AttentionMask* mask = nullptr);

template <typename T>
Var slice_cols(Graph<T>& g, Var x, std::size_t begin, std::size_t count);

template <typename T>
Var concat_cols(Graph<T>& g, const std::vector<Var>& parts);

template <typename T>
Var concat_rows(Graph<T>& g, Var a, Var b);

/// Rows of `table` selected by `ids` (embedding lookup).
template <typename T>
Var gather_rows(Graph<T>& g, Var table, const std::vector<int>& ids);

/// Rows flagged in `rows` are replaced by `row` (shape [cols] or [1, cols]).
template <typename T>
Var replace_rows(Graph<T>& g, Var x, const std::vector<std::uint8_t>& rows, Var row);

/// Inverted dropout: zeroes with probability p and scales survivors by
/// 1/(1-p). Identity when p == 0.
template <typename T>
Var dropout(Graph<T>& g, Var x, double p, std::mt19937_64& rng);

/// Mean of -log softmax(logits)[target] over rows whose target differs from
/// `ignore_index`. Throws Error(AllIgnored) if no row contributes.
template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, const std::vector<int>& targets, std::optional<int> ignore_index = {});

/// Mean squared error over all elements.
template <typename T>
Var mse(Graph<T>& g, Var a, Var b);

/// Mean over rows of KL(softmax(logits) || uniform): sum q log q + log K.
template <typename T>
Var kl_to_uniform(Graph<T>& g, Var logits);

/// Forward value is `hard`; the gradient flows to `soft` unchanged.
template <typename T>
Var straight_through(Graph<T>& g, Var soft, Tensor<T> hard);

/// sum(x * w) for a constant weight tensor of the same shape.
template <typename T>
Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& w);

// Plain tensor helpers (no graph).
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

}  // namespace tsr::nn
