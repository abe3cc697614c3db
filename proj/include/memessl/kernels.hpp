#pragma once

// Vector kernels used by the model's inner loops.
//
// Each kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is
// chosen once at first use from the CPU's capabilities; MEMESSL_KERNELS=
// scalar|avx2|neon in the environment overrides the choice, and select() can
// switch it at runtime (tests use this for equivalence checks).
//
// Variants agree with the scalar path up to floating-point reassociation;
// results are deterministic for a fixed backend.

#include <cstddef>
#include <span>
#include <string_view>

namespace memessl::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool available(Backend b);
Backend best_available();
// Throws std::invalid_argument if the backend is not available on this CPU.
void select(Backend b);
Backend active();
const KernelTable& table();
std::string_view name(Backend b);
Backend parse_backend(std::string_view s);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return table().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  table().axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

inline void scale(double alpha, std::span<double> y) { table().scale(alpha, y.data(), y.size()); }

inline double sum(std::span<const double> x) { return table().sum(x.data(), x.size()); }

// RAII backend override, restores the previous selection on scope exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : prev_(active()) { select(b); }
  ~ScopedBackend() { select(prev_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend prev_;
};

}  // namespace memessl::kernels
