#include "tsr/nn/ops.hpp"

#include <cmath>
#include <limits>

#include "tsr/simd/kernels.hpp"

namespace tsr::nn {

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) m.blocked[r * n + c] = 1;
  }
  return m;
}

AttentionMask AttentionMask::key_padding(std::size_t rows, const std::vector<std::uint8_t>& key_padding) {
  const std::size_t cols = key_padding.size();
  AttentionMask m{rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.blocked[r * cols + c] = key_padding[c] ? 1 : 0;
  }
  return m;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto* d = dst.data();
  const auto* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor<T>& A = g.value(a);
  const Tensor<T>& B = g.value(b);
  require(A.rank() == 2 && B.rank() == 2, "matmul needs rank-2 operands");
  const std::size_t m = trans_a ? A.dim(1) : A.dim(0);
  const std::size_t k = trans_a ? A.dim(0) : A.dim(1);
  const std::size_t kb = trans_b ? B.dim(1) : B.dim(0);
  const std::size_t n = trans_b ? B.dim(0) : B.dim(1);
  require(k == kb, "matmul inner dims " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  Tensor<T> out({m, n});
  simd::gemm<T>(trans_a, trans_b, m, n, k, T{1}, A.data(), A.dim(1), B.data(), B.dim(1), T{0}, out.data(), n);
  return g.record(std::move(out), {a, b}, [a, b, trans_a, trans_b, m, n, k](Graph<T>& g, Var self) {
    const Tensor<T>& A = g.value(a);
    const Tensor<T>& B = g.value(b);
    const Tensor<T>& dC = g.grad(self);
    if (g.requires_grad(a)) {
      Tensor<T>& dA = g.grad(a);
      if (!trans_a) {
        simd::gemm<T>(false, !trans_b, m, k, n, T{1}, dC.data(), n, B.data(), B.dim(1), T{1}, dA.data(), k);
      } else {
        simd::gemm<T>(trans_b, true, k, m, n, T{1}, B.data(), B.dim(1), dC.data(), n, T{1}, dA.data(), m);
      }
    }
    if (g.requires_grad(b)) {
      Tensor<T>& dB = g.grad(b);
      if (!trans_b) {
        simd::gemm<T>(!trans_a, false, k, n, m, T{1}, A.data(), A.dim(1), dC.data(), n, T{1}, dB.data(), n);
      } else {
        simd::gemm<T>(true, trans_a, n, k, m, T{1}, dC.data(), n, A.data(), A.dim(1), T{1}, dB.data(), k);
      }
    }
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& A = g.value(a);
  const Tensor<T>& B = g.value(b);
  require(A.shape() == B.shape(), "add: " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor<T> out = A;
  accumulate(out, B);
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    if (g.requires_grad(a)) accumulate(g.grad(a), d);
    if (g.requires_grad(b)) accumulate(g.grad(b), d);
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& A = g.value(a);
  const Tensor<T>& B = g.value(b);
  require(A.shape() == B.shape(), "mul: " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    const Tensor<T>& A = g.value(a);
    const Tensor<T>& B = g.value(b);
    if (g.requires_grad(a)) {
      auto& da = g.grad(a);
      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * B[i];
    }
    if (g.requires_grad(b)) {
      auto& db = g.grad(b);
      for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * A[i];
    }
  });
}

template <typename T>
Var add_bias(Graph<T>& g, Var x, Var bias) {
  const Tensor<T>& X = g.value(x);
  const Tensor<T>& B = g.value(bias);
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  require(B.size() == cols, "add_bias: bias " + shape_str(B.shape()) + " for " + shape_str(X.shape()));
  Tensor<T> out = X;
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] += B[c];
  }
  return g.record(std::move(out), {x, bias}, [x, bias, rows, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    if (g.requires_grad(x)) accumulate(g.grad(x), d);
    if (g.requires_grad(bias)) {
      auto& db = g.grad(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dr = d.row(r);
        for (std::size_t c = 0; c < cols; ++c) db[c] += dr[c];
      }
    }
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T s) {
  Tensor<T> out = g.value(x);
  simd::scal(s, out.data(), out.size());
  return g.record(std::move(out), {x}, [x, s](Graph<T>& g, Var self) {
    simd::axpy(s, g.grad(self).data(), g.grad(x).data(), g.grad(x).size());
  });
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
  const Tensor<T>& X = g.value(x);
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T v = X[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v)));
  }
  return g.record(std::move(out), {x}, [x](Graph<T>& g, Var self) {
    const Tensor<T>& X = g.value(x);
    const Tensor<T>& d = g.grad(self);
    auto& dx = g.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const T v = X[i];
      const T t = std::tanh(c * (v + k * v * v * v));
      const T deriv = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * k * v * v);
      dx[i] += d[i] * deriv;
    }
  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return g.record(std::move(out), {x}, [x](Graph<T>& g, Var self) {
    const Tensor<T>& X = g.value(x);
    const Tensor<T>& d = g.grad(self);
    auto& dx = g.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X[i] > T{0}) dx[i] += d[i];
    }
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, T eps) {
  const Tensor<T>& X = g.value(x);
  const Tensor<T>& G = g.value(gamma);
  const Tensor<T>& Bt = g.value(beta);
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  require(G.size() == cols && Bt.size() == cols, "layer_norm: affine width mismatch");
  Tensor<T> out(X.shape());
  auto xhat = std::make_shared<Tensor<T>>(X.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.row(r);
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* hr = xhat->row(r);
    T* orow = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      hr[c] = (xr[c] - mean) * rs;
      orow[c] = hr[c] * G[c] + Bt[c];
    }
  }
  return g.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, rstd, rows, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    const Tensor<T>& G = g.value(gamma);
    if (g.requires_grad(gamma) || g.requires_grad(beta)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dr = d.row(r);
        const T* hr = xhat->row(r);
        if (g.requires_grad(gamma)) {
          auto& dg = g.grad(gamma);
          for (std::size_t c = 0; c < cols; ++c) dg[c] += dr[c] * hr[c];
        }
        if (g.requires_grad(beta)) {
          auto& db = g.grad(beta);
          for (std::size_t c = 0; c < cols; ++c) db[c] += dr[c];
        }
      }
    }
    if (!g.requires_grad(x)) return;
    auto& dx = g.grad(x);
    std::vector<T> dh(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dr = d.row(r);
      const T* hr = xhat->row(r);
      T mean_dh = 0;
      T mean_dh_h = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        dh[c] = dr[c] * G[c];
        mean_dh += dh[c];
        mean_dh_h += dh[c] * hr[c];
      }
      mean_dh /= static_cast<T>(cols);
      mean_dh_h /= static_cast<T>(cols);
      T* dxr = dx.row(r);
      for (std::size_t c = 0; c < cols; ++c) dxr[c] += (*rstd)[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
    }
  });
}

namespace {

template <typename T>
void softmax_row(const T* x, T* y, std::size_t n, const std::uint8_t* blocked) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    if (!blocked || !blocked[c]) mx = std::max(mx, x[c]);
  }
  if (mx == -std::numeric_limits<T>::infinity()) {
    for (std::size_t c = 0; c < n; ++c) y[c] = T{0};
    return;
  }
  T sum = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (blocked && blocked[c]) {
      y[c] = T{0};
    } else {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
  }
  const T inv = T(1) / sum;
  for (std::size_t c = 0; c < n; ++c) y[c] *= inv;
}

}  // namespace

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_row(x.row(r), out.row(r), x.cols(), nullptr);
  return out;
}

template <typename T>
Var softmax(Graph<T>& g, Var x, const AttentionMask* mask) {
  const Tensor<T>& X = g.value(x);
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  if (mask) require(mask->rows == rows && mask->cols == cols, "softmax: mask shape mismatch");
  Tensor<T> out(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(X.row(r), out.row(r), cols, mask ? mask->blocked.data() + r * cols : nullptr);
  }
  return g.record(std::move(out), {x}, [x, rows, cols](Graph<T>& g, Var self) {
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& d = g.grad(self);
    auto& dx = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.row(r);
      const T* dr = d.row(r);
      const T dot = simd::dot(yr, dr, cols);
      T* dxr = dx.row(r);
      for (std::size_t c = 0; c < cols; ++c) dxr[c] += yr[c] * (dr[c] - dot);
    }
  });
}

template <typename T>
Var slice_cols(Graph<T>& g, Var x, std::size_t begin, std::size_t count) {
  const Tensor<T>& X = g.value(x);
  require(X.rank() == 2 && begin + count <= X.dim(1) && count > 0, "slice_cols out of range");
  const std::size_t rows = X.dim(0);
  const std::size_t cols = X.dim(1);
  Tensor<T> out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.row(r) + begin, count, out.row(r));
  return g.record(std::move(out), {x}, [x, begin, count, rows, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    auto& dx = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = dx.data() + r * cols + begin;
      const T* src = d.row(r);
      for (std::size_t c = 0; c < count; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var concat_cols(Graph<T>& g, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = g.value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    require(g.value(p).rank() == 2 && g.value(p).dim(0) == rows, "concat_cols: row mismatch");
    widths.push_back(g.value(p).dim(1));
    total += widths.back();
  }
  Tensor<T> out({rows, total});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& P = g.value(parts[i]);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(P.row(r), widths[i], out.row(r) + off);
    off += widths[i];
  }
  return g.record(std::move(out), parts, [parts, widths, rows, total](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (g.requires_grad(parts[i])) {
        auto& dp = g.grad(parts[i]);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* src = d.data() + r * total + off;
          T* dst = dp.row(r);
          for (std::size_t c = 0; c < widths[i]; ++c) dst[c] += src[c];
        }
      }
      off += widths[i];
    }
  });
}

template <typename T>
Var concat_rows(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& A = g.value(a);
  const Tensor<T>& B = g.value(b);
  require(A.cols() == B.cols(), "concat_rows: column mismatch");
  const std::size_t cols = A.cols();
  const std::size_t ra = A.rows();
  const std::size_t rb = B.rows();
  std::vector<T> data;
  data.reserve((ra + rb) * cols);
  data.insert(data.end(), A.values().begin(), A.values().end());
  data.insert(data.end(), B.values().begin(), B.values().end());
  Tensor<T> out({ra + rb, cols}, std::move(data));
  return g.record(std::move(out), {a, b}, [a, b, ra, rb, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    if (g.requires_grad(a)) {
      auto& da = g.grad(a);
      for (std::size_t i = 0; i < ra * cols; ++i) da[i] += d[i];
    }
    if (g.requires_grad(b)) {
      auto& db = g.grad(b);
      for (std::size_t i = 0; i < rb * cols; ++i) db[i] += d[ra * cols + i];
    }
  });
}

template <typename T>
Var gather_rows(Graph<T>& g, Var table, const std::vector<int>& ids) {
  const Tensor<T>& W = g.value(table);
  require(W.rank() == 2 && !ids.empty(), "gather_rows: bad table or empty ids");
  const std::size_t cols = W.dim(1);
  Tensor<T> out({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= W.dim(0)) {
      throw Error(ErrorCode::IndexOutOfRange, "gather_rows: id " + std::to_string(ids[i]));
    }
    std::copy_n(W.row(static_cast<std::size_t>(ids[i])), cols, out.row(i));
  }
  return g.record(std::move(out), {table}, [table, ids, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    auto& dw = g.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      simd::axpy(T{1}, d.row(i), dw.row(static_cast<std::size_t>(ids[i])), cols);
    }
  });
}

template <typename T>
Var replace_rows(Graph<T>& g, Var x, const std::vector<std::uint8_t>& rows_mask, Var row) {
  const Tensor<T>& X = g.value(x);
  const Tensor<T>& R = g.value(row);
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  require(rows_mask.size() == rows && R.size() == cols, "replace_rows: shape mismatch");
  Tensor<T> out = X;
  for (std::size_t r = 0; r < rows; ++r) {
    if (rows_mask[r]) std::copy_n(R.data(), cols, out.row(r));
  }
  return g.record(std::move(out), {x, row}, [x, row, rows_mask, rows, cols](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    for (std::size_t r = 0; r < rows; ++r) {
      if (rows_mask[r]) {
        if (g.requires_grad(row)) simd::axpy(T{1}, d.row(r), g.grad(row).data(), cols);
      } else if (g.requires_grad(x)) {
        simd::axpy(T{1}, d.row(r), g.grad(x).row(r), cols);
      }
    }
  });
}

template <typename T>
Var dropout(Graph<T>& g, Var x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error(ErrorCode::ConfigError, "dropout probability must be < 1");
  const Tensor<T>& X = g.value(x);
  std::bernoulli_distribution keep(1.0 - p);
  const T s = T(1.0 / (1.0 - p));
  auto factors = std::make_shared<std::vector<T>>(X.size());
  Tensor<T> out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    (*factors)[i] = keep(rng) ? s : T{0};
    out[i] = X[i] * (*factors)[i];
  }
  return g.record(std::move(out), {x}, [x, factors](Graph<T>& g, Var self) {
    const Tensor<T>& d = g.grad(self);
    auto& dx = g.grad(x);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * (*factors)[i];
  });
}

template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, const std::vector<int>& targets, std::optional<int> ignore_index) {
  const Tensor<T>& L = g.value(logits);
  const std::size_t rows = L.rows();
  const std::size_t cols = L.cols();
  require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                      std::to_string(rows) + " rows");
  auto probs = std::make_shared<Tensor<T>>(L.shape());
  T total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(L.row(r), probs->row(r), cols, nullptr);
    if (ignore_index && targets[r] == *ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= cols) {
      throw Error(ErrorCode::IndexOutOfRange, "cross_entropy: target " + std::to_string(targets[r]));
    }
    const T* lr = L.row(r);
    T mx = lr[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, lr[c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(lr[c] - mx);
    total += (std::log(sum) + mx) - lr[targets[r]];
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::AllIgnored, "cross_entropy: every position is ignored");
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(count));
  return g.record(std::move(out), {logits},
                  [logits, targets, ignore_index, probs, rows, cols, count](Graph<T>& g, Var self) {
                    const T s = g.grad(self)[0] / static_cast<T>(count);
                    auto& dl = g.grad(logits);
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (ignore_index && targets[r] == *ignore_index) continue;
                      const T* pr = probs->row(r);
                      T* dr = dl.row(r);
                      for (std::size_t c = 0; c < cols; ++c) dr[c] += s * pr[c];
                      dr[targets[r]] -= s;
                    }
                  });
}

template <typename T>
Var mse(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& A = g.value(a);
  const Tensor<T>& B = g.value(b);
  require(A.size() == B.size(), "mse: size mismatch");
  T sum = 0;
  for (std::size_t i = 0; i < A.size(); ++i) sum += (A[i] - B[i]) * (A[i] - B[i]);
  const std::size_t n = A.size();
  return g.record(Tensor<T>::scalar(sum / static_cast<T>(n)), {a, b}, [a, b, n](Graph<T>& g, Var self) {
    const T s = T(2) * g.grad(self)[0] / static_cast<T>(n);
    const Tensor<T>& A = g.value(a);
    const Tensor<T>& B = g.value(b);
    if (g.requires_grad(a)) {
      auto& da = g.grad(a);
      for (std::size_t i = 0; i < n; ++i) da[i] += s * (A[i] - B[i]);
    }
    if (g.requires_grad(b)) {
      auto& db = g.grad(b);
      for (std::size_t i = 0; i < n; ++i) db[i] -= s * (A[i] - B[i]);
    }
  });
}

template <typename T>
Var kl_to_uniform(Graph<T>& g, Var logits) {
  const Tensor<T>& z = g.value(logits);
  const std::size_t rows = z.rows();
  const std::size_t k = z.cols();
  // Row-wise log-softmax, kept for the backward pass.
  Tensor<T> logq(z.shape());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z.row(r);
    T* lr = logq.row(r);
    const T m = *std::max_element(zr, zr + k);
    T sum = 0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(zr[c] - m);
    const T lse = m + std::log(sum);
    T neg_entropy = 0;
    for (std::size_t c = 0; c < k; ++c) {
      lr[c] = zr[c] - lse;
      neg_entropy += std::exp(lr[c]) * lr[c];
    }
    total += neg_entropy + std::log(static_cast<T>(k));
  }
  return g.record(Tensor<T>::scalar(total / static_cast<T>(rows)), {logits},
                  [logits, logq = std::move(logq), rows, k](Graph<T>& g, Var self) {
                    const T s = g.grad(self)[0] / static_cast<T>(rows);
                    auto& dz = g.grad(logits);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* lr = logq.row(r);
                      T neg_entropy = 0;
                      for (std::size_t c = 0; c < k; ++c) neg_entropy += std::exp(lr[c]) * lr[c];
                      T* dr = dz.row(r);
                      for (std::size_t c = 0; c < k; ++c) dr[c] += s * std::exp(lr[c]) * (lr[c] - neg_entropy);
                    }
                  });
}

template <typename T>
Var straight_through(Graph<T>& g, Var soft, Tensor<T> hard) {
  require(g.value(soft).shape() == hard.shape(), "straight_through: shape mismatch");
  return g.record(std::move(hard), {soft}, [soft](Graph<T>& g, Var self) { accumulate(g.grad(soft), g.grad(self)); });
}

template <typename T>
Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& w) {
  const Tensor<T>& X = g.value(x);
  require(X.size() == w.size(), "weighted_sum: size mismatch");
  const T total = simd::dot(X.data(), w.data(), X.size());
  return g.record(Tensor<T>::scalar(total), {x}, [x, w](Graph<T>& g, Var self) {
    simd::axpy(g.grad(self)[0], w.data(), g.grad(x).data(), w.size());
  });
}

#define TSR_INSTANTIATE_OPS(T)                                                                             \
  template Var matmul<T>(Graph<T>&, Var, Var, bool, bool);                                                 \
  template Var add<T>(Graph<T>&, Var, Var);                                                                \
  template Var mul<T>(Graph<T>&, Var, Var);                                                                \
  template Var add_bias<T>(Graph<T>&, Var, Var);                                                           \
  template Var scale<T>(Graph<T>&, Var, T);                                                                \
  template Var gelu<T>(Graph<T>&, Var);                                                                    \
  template Var relu<T>(Graph<T>&, Var);                                                                    \
  template Var layer_norm<T>(Graph<T>&, Var, Var, Var, T);                                                 \
  template Var softmax<T>(Graph<T>&, Var, const AttentionMask*);                                           \
  template Var slice_cols<T>(Graph<T>&, Var, std::size_t, std::size_t);                                    \
  template Var concat_cols<T>(Graph<T>&, const std::vector<Var>&);                                         \
  template Var concat_rows<T>(Graph<T>&, Var, Var);                                                        \
  template Var gather_rows<T>(Graph<T>&, Var, const std::vector<int>&);                                    \
  template Var replace_rows<T>(Graph<T>&, Var, const std::vector<std::uint8_t>&, Var);                     \
  template Var dropout<T>(Graph<T>&, Var, double, std::mt19937_64&);                                       \
  template Var cross_entropy<T>(Graph<T>&, Var, const std::vector<int>&, std::optional<int>);              \
  template Var mse<T>(Graph<T>&, Var, Var);                                                                \
  template Var kl_to_uniform<T>(Graph<T>&, Var);                                                           \
  template Var straight_through<T>(Graph<T>&, Var, Tensor<T>);                                             \
  template Var weighted_sum<T>(Graph<T>&, Var, const Tensor<T>&);                                          \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);

TSR_INSTANTIATE_OPS(float)
TSR_INSTANTIATE_OPS(double)

}  // namespace tsr::nn
