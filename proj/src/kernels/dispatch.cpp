// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "elf/error.hpp"
#include "elf/kernels.hpp"

namespace elf::simd {

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("ELF_SIMD"); env != nullptr && *env != '\0') {
    const auto b = parse_backend(env);
    if (!b) throw ConfigError(std::string("ELF_SIMD: unknown backend '") + env + "'");
    return &kernels_for(*b);
  }
  return &kernels_for(best_backend());
}

const KernelTable*& active() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::avx512: return "avx512";
  }
  return "?";
}

std::optional<Backend> parse_backend(std::string_view name) {
  for (auto b : {Backend::scalar, Backend::avx2, Backend::avx512}) {
    if (backend_name(b) == name) return b;
  }
  return std::nullopt;
}

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
#if defined(ELF_HAVE_X86_SIMD)
    case Backend::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Backend::avx512:
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
    default: return false;
#endif
  }
  return false;
}

Backend best_backend() {
  if (backend_supported(Backend::avx512)) return Backend::avx512;
  if (backend_supported(Backend::avx2)) return Backend::avx2;
  return Backend::scalar;
}

const KernelTable& kernels_for(Backend b) {
  if (!backend_supported(b)) {
    throw ConfigError("SIMD backend '" + std::string(backend_name(b)) + "' not supported by this CPU");
  }
  switch (b) {
#if defined(ELF_HAVE_X86_SIMD)
    case Backend::avx2: return detail::avx2_table;
    case Backend::avx512: return detail::avx512_table;
#endif
    default: return detail::scalar_table;
  }
}

const KernelTable& kernels() { return *active(); }

void set_backend(Backend b) { active() = &kernels_for(b); }

}  // namespace elf::simd
