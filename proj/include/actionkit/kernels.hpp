#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace actionkit::kernels {

// ============================================================================
// Backend selection
// ============================================================================
//
// Every operation has a scalar reference implementation; hot inner loops also
// have AVX2 variants selected at runtime. All variants of one kernel produce
// bit-identical output: per output element the accumulation order is fixed,
// SIMD code uses separate mul/add (no fma), and weight-gradient reductions
// follow an 8-bin blocked scheme shared by the scalar twin.

enum class Backend { Scalar, Avx2 };

bool avx2_supported();
Backend active_backend();
void set_backend(Backend b);  // throws ConfigError when unsupported
// Resolves ACTION_KIT_SIMD (scalar | avx2 | auto); called lazily on first use.
void init_backend_from_env();
std::string backend_name(Backend b);

// ============================================================================
// Convolution geometry
// ============================================================================

struct ConvGeom {
  int rank = 2;  // 1..3 spatial dims
  std::size_t batch = 1;
  std::size_t cin = 1;
  std::size_t cout = 1;
  std::size_t groups = 1;
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> out{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};

  std::size_t in_spatial() const { return in[0] * in[1] * in[2]; }
  std::size_t out_spatial() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_spatial() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool unit_stride() const { return stride[0] == 1 && stride[1] == 1 && stride[2] == 1; }
};

// Generic cross-correlation, any rank/stride/groups. Scalar only; used for
// 1D/3D and strided cases and as the fallback everywhere else.
template <typename S>
void convnd_fwd(const ConvGeom& g, const S* x, const S* w, const S* bias, S* y);
template <typename S>
void convnd_bwd_input(const ConvGeom& g, const S* dy, const S* w, S* dx);
template <typename S>
void convnd_bwd_weight(const ConvGeom& g, const S* dy, const S* x, S* dw, S* db);

// 2D unit-stride fast path. Operates on an input that the caller has already
// zero-padded to (in[0]+2*pad[0], in[1]+2*pad[1]); geometry still carries the
// logical pad so out extents line up.
template <typename S>
void conv2d_s1_fwd(const ConvGeom& g, const S* x_padded, const S* w, const S* bias, S* y);
// 8-bin blocked reduction over output x; bins combined pairwise.
template <typename S>
void conv2d_s1_bwd_weight(const ConvGeom& g, const S* dy, const S* x_padded, S* dw, S* db);

// ============================================================================
// Elementwise / fused loops
// ============================================================================

// y = x + x*m over x viewed as (outer, mid, inner) with m of shape
// (outer, inner) broadcast across mid. inner == 1 degenerates to a scalar
// gate per row; mid == 1 to a plain elementwise gate.
template <typename S>
void residual_gate_fwd(const S* x, const S* m, S* y,
                       std::size_t outer, std::size_t mid, std::size_t inner);
// dx = g*(1+m); dm = sum_mid g*x
template <typename S>
void residual_gate_bwd(const S* g, const S* x, const S* m, S* dx, S* dm,
                       std::size_t outer, std::size_t mid, std::size_t inner);

// y[r,i] = a[r % arows]*x[r,i] + b[r % arows]  (batch-norm style row affine)
template <typename S>
void scale_shift(const S* x, const S* a, const S* b, S* y,
                 std::size_t rows, std::size_t arows, std::size_t cols);

// v = momentum*v + (g + wd*x); x -= lr*v
template <typename S>
void sgd_momentum_update(S* x, const S* g, S* v, std::size_t n,
                         S lr, S momentum, S weight_decay);

template <typename S>
void relu_fwd(const S* x, S* y, std::size_t n);
template <typename S>
void relu_bwd(const S* g, const S* x, S* dx, std::size_t n);

template <typename S>
void sigmoid_fwd(const S* x, S* y, std::size_t n);

}  // namespace actionkit::kernels
