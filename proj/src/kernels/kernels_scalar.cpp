// SPDX-License-Identifier: Apache-2.0
// Portable reference kernels. Built with -ffp-contract=off so no FMA is formed.
#include <algorithm>

#include "elf/kernels.hpp"

namespace elf::simd {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void sgd_update(double* w, double* v, const double* g, std::size_t n, double lr, double momentum,
                double weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
    w[i] -= lr * v[i];
  }
}

}  // namespace

namespace detail {
const KernelTable scalar_table{Backend::scalar, gemm, relu, relu_backward, sgd_update};
}

}  // namespace elf::simd
