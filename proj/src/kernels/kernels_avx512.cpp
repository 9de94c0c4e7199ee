// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx512f -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "elf/kernels.hpp"
#include "simd_impl.inl"

namespace elf::simd {
namespace {

struct Avx512 {
  using reg = __m512d;
  static constexpr std::size_t width = 8;
  static constexpr std::size_t tile_rows = 6;
  static reg load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, reg v) { _mm512_storeu_pd(p, v); }
  static reg set1(double v) { return _mm512_set1_pd(v); }
  static reg zero() { return _mm512_setzero_pd(); }
  static reg fma(reg a, reg b, reg c) { return _mm512_fmadd_pd(a, b, c); }
  static reg fnma(reg a, reg b, reg c) { return _mm512_fnmadd_pd(a, b, c); }
  static reg max(reg a, reg b) { return _mm512_max_pd(a, b); }
  static reg gt_select(reg x, reg y) {
    return _mm512_maskz_mov_pd(_mm512_cmp_pd_mask(x, _mm512_setzero_pd(), _CMP_GT_OQ), y);
  }
};

}  // namespace

namespace detail {
const KernelTable avx512_table{Backend::avx512, impl::gemm<Avx512>, impl::relu<Avx512>,
                               impl::relu_backward<Avx512>, impl::sgd_update<Avx512>};
}

}  // namespace elf::simd
