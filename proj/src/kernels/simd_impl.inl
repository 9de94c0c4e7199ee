// SPDX-License-Identifier: Apache-2.0
//
// Width-generic kernel bodies shared by the AVX2 and AVX-512 translation units.
// `V` supplies: reg, width, load, store, set1, zero, fma (a*b+c), fnma (c-a*b),
// max, gt_select (x > 0 ? y : 0). Included once per ISA with matching -m flags.
//
// Every scalar remainder goes through std::fma so that border elements round
// exactly like the vector lanes.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace elf::simd::impl {
// Internal linkage: each ISA translation unit gets its own copy.
namespace {

constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 512;

// R rows x two vectors of C held in registers across the k loop.
template <class V, std::size_t R>
inline void tile(std::size_t kc, const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double* c, std::size_t ldc) {
  constexpr std::size_t w = V::width;
  typename V::reg acc0[R], acc1[R];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < R; ++r) {
    acc0[r] = V::load(c + r * ldc);
    acc1[r] = V::load(c + r * ldc + w);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const double* bp = b + p * ldb;
    const typename V::reg b0 = V::load(bp), b1 = V::load(bp + w);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < R; ++r) {
      const typename V::reg ar = V::set1(a[r * lda + p]);
      acc0[r] = V::fma(ar, b0, acc0[r]);
      acc1[r] = V::fma(ar, b1, acc1[r]);
    }
  }
#pragma GCC unroll 8
  for (std::size_t r = 0; r < R; ++r) {
    V::store(c + r * ldc, acc0[r]);
    V::store(c + r * ldc + w, acc1[r]);
  }
}

template <class V>
inline void tile1(std::size_t kc, const double* a, const double* b, std::size_t ldb, double* c) {
  constexpr std::size_t w = V::width;
  typename V::reg c0 = V::load(c), c1 = V::load(c + w);
  for (std::size_t p = 0; p < kc; ++p) {
    const typename V::reg ar = V::set1(a[p]);
    c0 = V::fma(ar, V::load(b + p * ldb), c0);
    c1 = V::fma(ar, V::load(b + p * ldb + w), c1);
  }
  V::store(c, c0);
  V::store(c + w, c1);
}

inline void tail(std::size_t rows, std::size_t cols, std::size_t kc, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      double s = c[r * ldc + j];
      for (std::size_t p = 0; p < kc; ++p) s = std::fma(a[r * lda + p], b[p * ldb + j], s);
      c[r * ldc + j] = s;
    }
  }
}

template <class V>
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  constexpr std::size_t tw = 2 * V::width;
  constexpr std::size_t R = V::tile_rows;
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
  }
  for (std::size_t pb = 0; pb < k; pb += kBlockK) {
    const std::size_t kc = std::min(kBlockK, k - pb);
    for (std::size_t jb = 0; jb < n; jb += kBlockN) {
      const std::size_t je = std::min(n, jb + kBlockN);
      std::size_t i = 0;
      for (; i + R <= m; i += R) {
        const double* ai = a + i * lda + pb;
        std::size_t j = jb;
        for (; j + tw <= je; j += tw) tile<V, R>(kc, ai, lda, b + pb * ldb + j, ldb, c + i * ldc + j, ldc);
        if (j < je) tail(R, je - j, kc, ai, lda, b + pb * ldb + j, ldb, c + i * ldc + j, ldc);
      }
      for (; i < m; ++i) {
        const double* ai = a + i * lda + pb;
        std::size_t j = jb;
        for (; j + tw <= je; j += tw) tile1<V>(kc, ai, b + pb * ldb + j, ldb, c + i * ldc + j);
        if (j < je) tail(1, je - j, kc, ai, lda, b + pb * ldb + j, ldb, c + i * ldc + j, ldc);
      }
    }
  }
}

template <class V>
void relu(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  const typename V::reg z = V::zero();
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::max(V::load(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

template <class V>
void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    V::store(dx + i, V::gt_select(V::load(x + i), V::load(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

template <class V>
void sgd_update(double* w, double* v, const double* g, std::size_t n, double lr, double momentum,
                double weight_decay) {
  const typename V::reg vm = V::set1(momentum), vwd = V::set1(weight_decay), vlr = V::set1(lr);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const typename V::reg wi = V::load(w + i);
    typename V::reg vi = V::fma(vm, V::load(v + i), V::load(g + i));
    vi = V::fma(vwd, wi, vi);
    V::store(v + i, vi);
    V::store(w + i, V::fnma(vlr, vi, wi));
  }
  for (; i < n; ++i) {
    double vi = std::fma(momentum, v[i], g[i]);
    vi = std::fma(weight_decay, w[i], vi);
    v[i] = vi;
    w[i] = std::fma(-lr, vi, w[i]);
  }
}

}  // namespace
}  // namespace elf::simd::impl
