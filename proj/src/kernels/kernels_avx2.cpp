// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "elf/kernels.hpp"
#include "simd_impl.inl"

namespace elf::simd {
namespace {

struct Avx2 {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static constexpr std::size_t tile_rows = 6;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg fnma(reg a, reg b, reg c) { return _mm256_fnmadd_pd(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static reg gt_select(reg x, reg y) {
    return _mm256_and_pd(_mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ), y);
  }
};

}  // namespace

namespace detail {
const KernelTable avx2_table{Backend::avx2, impl::gemm<Avx2>, impl::relu<Avx2>,
                             impl::relu_backward<Avx2>, impl::sgd_update<Avx2>};
}

}  // namespace elf::simd
