#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "tsr/simd/kernels.hpp"

namespace tsr::simd {
namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar_kernels();
    case Isa::Avx2:
      return avx2_kernels();
    case Isa::Neon:
      return neon_kernels();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("TSR_SIMD")) {
    const std::string want{env};
    Isa isa = Isa::Scalar;
    if (want == "avx2") {
      isa = Isa::Avx2;
    } else if (want == "neon") {
      isa = Isa::Neon;
    } else if (want != "scalar") {
      throw std::invalid_argument("TSR_SIMD: unknown ISA '" + want + "'");
    }
    if (const KernelTable* t = table_for(isa)) return t;
    throw std::invalid_argument("TSR_SIMD: ISA '" + want + "' is not available on this machine");
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) throw std::invalid_argument("ISA not available: " + std::string{isa_name(isa)});
  slot().store(t, std::memory_order_relaxed);
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T{0}) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
    } else if (beta != T{1}) {
      scal(beta, crow, n);
    }
  }
  if (alpha == T{0} || k == 0) return;

  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * lda;
      T* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T s = alpha * arow[p];
        if (s != T{0}) axpy(s, b + p * ldb, crow, n);
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * lda;
      T* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += alpha * dot(arow, b + j * ldb, k);
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = a + p * lda;
      const T* brow = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const T s = alpha * arow[i];
        if (s != T{0}) axpy(s, brow, c + i * ldc, n);
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T sum = 0;
        for (std::size_t p = 0; p < k; ++p) sum += a[p * lda + i] * b[j * ldb + p];
        c[i * ldc + j] += alpha * sum;
      }
    }
  }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
                          const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, double, const double*,
                           std::size_t, const double*, std::size_t, double, double*, std::size_t);

}  // namespace tsr::simd
