#pragma once

// Inner-loop kernels used by the tensor ops. Every kernel has a scalar
// reference implementation; vectorized variants (AVX2+FMA on x86-64, NEON on
// AArch64) are selected once at runtime and must agree with the reference to
// within rounding.

#include <cstddef>
#include <string_view>

namespace tsr::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scal_f32)(float alpha, float* x, std::size_t n);
  void (*scal_f64)(double alpha, double* x, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Table picked at first use: the best supported ISA, unless the TSR_SIMD
// environment variable names another one ("scalar", "avx2", "neon").
const KernelTable& active();

// Overrides the active table. Intended for tests and benchmarks.
void set_active(Isa isa);

inline float dot(const float* a, const float* b, std::size_t n) { return active().dot_f32(a, b, n); }
inline double dot(const double* a, const double* b, std::size_t n) { return active().dot_f64(a, b, n); }
inline void axpy(float alpha, const float* x, float* y, std::size_t n) { active().axpy_f32(alpha, x, y, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy_f64(alpha, x, y, n); }
inline void scal(float alpha, float* x, std::size_t n) { active().scal_f32(alpha, x, n); }
inline void scal(double alpha, double* x, std::size_t n) { active().scal_f64(alpha, x, n); }

/// Row-major C = alpha * op(A) * op(B) + beta * C, where op(X) is X or X^T.
/// op(A) is m x k, op(B) is k x n, C is m x n; ld* are row strides.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace tsr::simd
