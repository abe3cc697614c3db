#include "memessl/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace memessl::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &scalar_table();
    case Backend::avx2: return cpu_has_avx2() ? avx2_table() : nullptr;
    case Backend::neon: return neon_table();
  }
  return nullptr;
}

Backend initial_backend() {
  if (const char* env = std::getenv("MEMESSL_KERNELS"); env != nullptr && *env != '\0') {
    Backend b = parse_backend(env);
    if (available(b)) return b;
  }
  return best_available();
}

struct State {
  std::atomic<const KernelTable*> table;
  std::atomic<Backend> backend;
  State() {
    Backend b = initial_backend();
    backend.store(b);
    table.store(table_for(b));
  }
};

State& state() {
  static State s;
  return s;
}

}  // namespace

bool available(Backend b) { return table_for(b) != nullptr; }

Backend best_available() {
  if (available(Backend::avx2)) return Backend::avx2;
  if (available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

void select(Backend b) {
  const KernelTable* t = table_for(b);
  if (t == nullptr) throw std::invalid_argument("kernel backend not available: " + std::string(name(b)));
  state().backend.store(b);
  state().table.store(t);
}

Backend active() { return state().backend.load(); }

const KernelTable& table() { return *state().table.load(std::memory_order_relaxed); }

std::string_view name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

Backend parse_backend(std::string_view s) {
  if (s == "scalar") return Backend::scalar;
  if (s == "avx2") return Backend::avx2;
  if (s == "neon") return Backend::neon;
  throw std::invalid_argument("unknown kernel backend: " + std::string(s));
}

}  // namespace memessl::kernels
