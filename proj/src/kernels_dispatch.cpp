// Runtime backend selection. The fast path is AVX2 when the CPU supports it;
// ACTION_KIT_SIMD=scalar|avx2|auto overrides, ACTION_KIT_THREADS caps the
// worker count.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>
#include <type_traits>

#include "actionkit/errors.hpp"
#include "actionkit/kernels.hpp"
#include "actionkit/parallel.hpp"
#include "kernels_impl.hpp"

namespace actionkit {

namespace {

std::atomic<int> g_thread_budget{0};  // 0 = not resolved yet

int resolve_thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("ACTION_KIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

}  // namespace

int thread_budget() {
  int b = g_thread_budget.load(std::memory_order_relaxed);
  if (b == 0) {
    b = resolve_thread_budget();
    g_thread_budget.store(b, std::memory_order_relaxed);
  }
  return b;
}

void set_thread_budget(int n) {
  g_thread_budget.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

}  // namespace actionkit

namespace actionkit::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Scalar};
std::atomic<bool> g_initialized{false};

Backend detect_default() {
  if (const char* env = std::getenv("ACTION_KIT_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported()) throw ConfigError("ACTION_KIT_SIMD=avx2 but cpu lacks avx2");
      return Backend::Avx2;
    }
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

inline Backend backend() {
  if (!g_initialized.load(std::memory_order_acquire)) init_backend_from_env();
  return g_backend.load(std::memory_order_relaxed);
}

}  // namespace

bool avx2_supported() {
#if ACTIONKIT_X86
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

void init_backend_from_env() {
  g_backend.store(detect_default(), std::memory_order_relaxed);
  g_initialized.store(true, std::memory_order_release);
}

Backend active_backend() { return backend(); }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) {
    throw ConfigError("avx2 backend requested but not supported on this cpu");
  }
  g_backend.store(b, std::memory_order_relaxed);
  g_initialized.store(true, std::memory_order_release);
}

std::string backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

// ============================================================================
// Dispatched entry points
// ============================================================================

template <typename S>
void convnd_fwd(const ConvGeom& g, const S* x, const S* w, const S* bias, S* y) {
  scalar::convnd_fwd<S>(g, x, w, bias, y);
}

template <typename S>
void convnd_bwd_input(const ConvGeom& g, const S* dy, const S* w, S* dx) {
  scalar::convnd_bwd_input<S>(g, dy, w, dx);
}

template <typename S>
void convnd_bwd_weight(const ConvGeom& g, const S* dy, const S* x, S* dw, S* db) {
  scalar::convnd_bwd_weight<S>(g, dy, x, dw, db);
}

template <typename S>
void conv2d_s1_fwd(const ConvGeom& g, const S* xp, const S* w, const S* bias, S* y) {
#if ACTIONKIT_X86
  if (backend() == Backend::Avx2) {
    avx2::conv2d_s1_fwd(g, xp, w, bias, y);
    return;
  }
#endif
  scalar::conv2d_s1_fwd<S>(g, xp, w, bias, y);
}

template <typename S>
void conv2d_s1_bwd_weight(const ConvGeom& g, const S* dy, const S* xp, S* dw, S* db) {
#if ACTIONKIT_X86
  if (backend() == Backend::Avx2) {
    avx2::conv2d_s1_bwd_weight(g, dy, xp, dw, db);
    return;
  }
#endif
  scalar::conv2d_s1_bwd_weight<S>(g, dy, xp, dw, db);
}

template <typename S>
void residual_gate_fwd(const S* x, const S* m, S* y,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
#if ACTIONKIT_X86
  if (backend() == Backend::Avx2) {
    avx2::residual_gate_fwd(x, m, y, outer, mid, inner);
    return;
  }
#endif
  scalar::residual_gate_fwd<S>(x, m, y, outer, mid, inner);
}

template <typename S>
void residual_gate_bwd(const S* g, const S* x, const S* m, S* dx, S* dm,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
  scalar::residual_gate_bwd<S>(g, x, m, dx, dm, outer, mid, inner);
}

template <typename S>
void scale_shift(const S* x, const S* a, const S* b, S* y,
                 std::size_t rows, std::size_t arows, std::size_t cols) {
#if ACTIONKIT_X86
  if (backend() == Backend::Avx2) {
    avx2::scale_shift(x, a, b, y, rows, arows, cols);
    return;
  }
#endif
  scalar::scale_shift<S>(x, a, b, y, rows, arows, cols);
}

template <typename S>
void sgd_momentum_update(S* x, const S* g, S* v, std::size_t n,
                         S lr, S momentum, S weight_decay) {
#if ACTIONKIT_X86
  if (backend() == Backend::Avx2) {
    avx2::sgd_momentum_update(x, g, v, n, lr, momentum, weight_decay);
    return;
  }
#endif
  scalar::sgd_momentum_update<S>(x, g, v, n, lr, momentum, weight_decay);
}

template <typename S>
void relu_fwd(const S* x, S* y, std::size_t n) {
#if ACTIONKIT_X86
  if constexpr (std::is_same_v<S, float>) {
    if (backend() == Backend::Avx2) {
      avx2::relu_fwd(x, y, n);
      return;
    }
  }
#endif
  scalar::relu_fwd<S>(x, y, n);
}

template <typename S>
void relu_bwd(const S* g, const S* x, S* dx, std::size_t n) {
#if ACTIONKIT_X86
  if constexpr (std::is_same_v<S, float>) {
    if (backend() == Backend::Avx2) {
      avx2::relu_bwd(g, x, dx, n);
      return;
    }
  }
#endif
  scalar::relu_bwd<S>(g, x, dx, n);
}

template <typename S>
void sigmoid_fwd(const S* x, S* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const S v = x[i];
    if (v >= S(0)) {
      y[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      y[i] = e / (S(1) + e);
    }
  }
}

#define ACTIONKIT_INSTANTIATE(S)                                                          \
  template void convnd_fwd<S>(const ConvGeom&, const S*, const S*, const S*, S*);         \
  template void convnd_bwd_input<S>(const ConvGeom&, const S*, const S*, S*);             \
  template void convnd_bwd_weight<S>(const ConvGeom&, const S*, const S*, S*, S*);        \
  template void conv2d_s1_fwd<S>(const ConvGeom&, const S*, const S*, const S*, S*);      \
  template void conv2d_s1_bwd_weight<S>(const ConvGeom&, const S*, const S*, S*, S*);     \
  template void residual_gate_fwd<S>(const S*, const S*, S*, std::size_t, std::size_t,    \
                                     std::size_t);                                        \
  template void residual_gate_bwd<S>(const S*, const S*, const S*, S*, S*, std::size_t,   \
                                     std::size_t, std::size_t);                           \
  template void scale_shift<S>(const S*, const S*, const S*, S*, std::size_t,             \
                               std::size_t, std::size_t);                                 \
  template void sgd_momentum_update<S>(S*, const S*, S*, std::size_t, S, S, S);           \
  template void relu_fwd<S>(const S*, S*, std::size_t);                                   \
  template void relu_bwd<S>(const S*, const S*, S*, std::size_t);                         \
  template void sigmoid_fwd<S>(const S*, S*, std::size_t);

ACTIONKIT_INSTANTIATE(float)
ACTIONKIT_INSTANTIATE(double)
#undef ACTIONKIT_INSTANTIATE

}  // namespace actionkit::kernels
