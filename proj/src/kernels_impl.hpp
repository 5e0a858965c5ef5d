#pragma once

// Internal kernel variant declarations shared by the dispatch layer.

#include "actionkit/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define ACTIONKIT_X86 1
#else
#define ACTIONKIT_X86 0
#endif

namespace actionkit::kernels::scalar {

template <typename S>
void convnd_fwd(const ConvGeom& g, const S* x, const S* w, const S* bias, S* y);
template <typename S>
void convnd_bwd_input(const ConvGeom& g, const S* dy, const S* w, S* dx);
template <typename S>
void convnd_bwd_weight(const ConvGeom& g, const S* dy, const S* x, S* dw, S* db);

template <typename S>
void conv2d_s1_fwd(const ConvGeom& g, const S* xp, const S* w, const S* bias, S* y);
template <typename S>
void conv2d_s1_bwd_weight(const ConvGeom& g, const S* dy, const S* xp, S* dw, S* db);

template <typename S>
void residual_gate_fwd(const S* x, const S* m, S* y,
                       std::size_t outer, std::size_t mid, std::size_t inner);
template <typename S>
void residual_gate_bwd(const S* g, const S* x, const S* m, S* dx, S* dm,
                       std::size_t outer, std::size_t mid, std::size_t inner);

template <typename S>
void scale_shift(const S* x, const S* a, const S* b, S* y,
                 std::size_t rows, std::size_t arows, std::size_t cols);

template <typename S>
void sgd_momentum_update(S* x, const S* g, S* v, std::size_t n,
                         S lr, S momentum, S weight_decay);

template <typename S>
void relu_fwd(const S* x, S* y, std::size_t n);
template <typename S>
void relu_bwd(const S* g, const S* x, S* dx, std::size_t n);

// Combine the 8 blocked accumulation bins in a fixed pairwise order. Both
// the scalar and the SIMD weight-gradient kernels funnel through this.
template <typename S>
inline S combine_bins8(const S* b) {
  return ((b[0] + b[1]) + (b[2] + b[3])) + ((b[4] + b[5]) + (b[6] + b[7]));
}

}  // namespace actionkit::kernels::scalar

#if ACTIONKIT_X86
namespace actionkit::kernels::avx2 {

void conv2d_s1_fwd(const ConvGeom& g, const float* xp, const float* w, const float* bias, float* y);
void conv2d_s1_fwd(const ConvGeom& g, const double* xp, const double* w, const double* bias, double* y);
void conv2d_s1_bwd_weight(const ConvGeom& g, const float* dy, const float* xp, float* dw, float* db);
void conv2d_s1_bwd_weight(const ConvGeom& g, const double* dy, const double* xp, double* dw, double* db);

void residual_gate_fwd(const float* x, const float* m, float* y,
                       std::size_t outer, std::size_t mid, std::size_t inner);
void residual_gate_fwd(const double* x, const double* m, double* y,
                       std::size_t outer, std::size_t mid, std::size_t inner);

void scale_shift(const float* x, const float* a, const float* b, float* y,
                 std::size_t rows, std::size_t arows, std::size_t cols);
void scale_shift(const double* x, const double* a, const double* b, double* y,
                 std::size_t rows, std::size_t arows, std::size_t cols);

void sgd_momentum_update(float* x, const float* g, float* v, std::size_t n,
                         float lr, float momentum, float weight_decay);
void sgd_momentum_update(double* x, const double* g, double* v, std::size_t n,
                         double lr, double momentum, double weight_decay);

void relu_fwd(const float* x, float* y, std::size_t n);
void relu_bwd(const float* g, const float* x, float* dx, std::size_t n);

}  // namespace actionkit::kernels::avx2
#endif
