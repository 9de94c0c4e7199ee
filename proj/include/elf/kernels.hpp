// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops of the engine. Each kernel exists as a portable
// scalar reference and as AVX2 / AVX-512 variants; the widest variant the CPU
// supports is selected once at startup (override with ELF_SIMD=scalar|avx2|avx512).
//
// Within one backend every output element is computed by the same sequence of
// roundings regardless of its position in the matrix, so a batched evaluation
// is bitwise identical to evaluating its columns one at a time.
#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

namespace elf::simd {

enum class Backend { scalar, avx2, avx512 };

std::string_view backend_name(Backend b);
std::optional<Backend> parse_backend(std::string_view name);

struct KernelTable {
  Backend backend;

  // C[MxN] = (accumulate ? C : 0) + A[MxK] * B[KxN], all row-major with leading dims.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

  // y = max(0, x)
  void (*relu)(const double* x, double* y, std::size_t n);

  // dx = x > 0 ? dy : 0
  void (*relu_backward)(const double* x, const double* dy, double* dx, std::size_t n);

  // v = momentum * v + g + weight_decay * w;  w = w - lr * v
  void (*sgd_update)(double* w, double* v, const double* g, std::size_t n, double lr,
                     double momentum, double weight_decay);
};

bool backend_supported(Backend b);
Backend best_backend();

/// Table for a specific backend; throws ConfigError when the CPU lacks it.
const KernelTable& kernels_for(Backend b);

/// The active table used by all layers.
const KernelTable& kernels();

/// Switch the active backend (tests and ELF_SIMD). Not thread-safe.
void set_backend(Backend b);

namespace detail {
extern const KernelTable scalar_table;
#if defined(ELF_HAVE_X86_SIMD)
extern const KernelTable avx2_table;
extern const KernelTable avx512_table;
#endif
}  // namespace detail

}  // namespace elf::simd
