#include "tsr/simd/kernels.hpp"

namespace tsr::simd {
namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T sum = 0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scal_ref(T alpha, T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::Scalar,       &dot_ref<float>,  &dot_ref<double>, &axpy_ref<float>,
      &axpy_ref<double>, &scal_ref<float>, &scal_ref<double>,
  };
  return table;
}

}  // namespace tsr::simd
