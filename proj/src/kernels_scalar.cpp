// Scalar reference kernels. These define the numerical contract: every SIMD
// variant must reproduce them value-for-value, so accumulation orders here
// are chosen to be lane-friendly (see conv2d_s1_bwd_weight's 8-bin scheme).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "actionkit/parallel.hpp"
#include "kernels_impl.hpp"

namespace actionkit::kernels::scalar {

namespace {

inline std::ptrdiff_t in_coord(std::size_t o, std::size_t stride, std::size_t k, std::size_t pad) {
  return static_cast<std::ptrdiff_t>(o * stride + k) - static_cast<std::ptrdiff_t>(pad);
}

}  // namespace

// ============================================================================
// Generic direct cross-correlation (any rank <= 3, any stride, groups)
// ============================================================================

template <typename S>
void convnd_fwd(const ConvGeom& g, const S* x, const S* w, const S* bias, S* y) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t in_sp = g.in_spatial();
  const std::size_t out_sp = g.out_spatial();
  const std::size_t k_sp = g.kernel_spatial();

  parallel_for(g.batch * g.cout, [&](std::size_t jb, std::size_t je) {
    for (std::size_t job = jb; job < je; ++job) {
      const std::size_t n = job / g.cout;
      const std::size_t co = job % g.cout;
      const std::size_t grp = co / cout_g;
      const S* xg = x + (n * g.cin + grp * cin_g) * in_sp;
      const S* wc = w + co * cin_g * k_sp;
      S* yc = y + (n * g.cout + co) * out_sp;

      std::size_t o_flat = 0;
      for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
        for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
          for (std::size_t o2 = 0; o2 < g.out[2]; ++o2, ++o_flat) {
            S acc = bias ? bias[co] : S(0);
            for (std::size_t ci = 0; ci < cin_g; ++ci) {
              const S* xc = xg + ci * in_sp;
              const S* wk = wc + ci * k_sp;
              for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
                const std::ptrdiff_t i0 = in_coord(o0, g.stride[0], k0, g.pad[0]);
                if (i0 < 0 || i0 >= static_cast<std::ptrdiff_t>(g.in[0])) continue;
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
                  const std::ptrdiff_t i1 = in_coord(o1, g.stride[1], k1, g.pad[1]);
                  if (i1 < 0 || i1 >= static_cast<std::ptrdiff_t>(g.in[1])) continue;
                  for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                    const std::ptrdiff_t i2 = in_coord(o2, g.stride[2], k2, g.pad[2]);
                    if (i2 < 0 || i2 >= static_cast<std::ptrdiff_t>(g.in[2])) continue;
                    acc += wk[(k0 * g.kernel[1] + k1) * g.kernel[2] + k2] *
                           xc[(static_cast<std::size_t>(i0) * g.in[1] +
                               static_cast<std::size_t>(i1)) * g.in[2] +
                              static_cast<std::size_t>(i2)];
                  }
                }
              }
            }
            yc[o_flat] = acc;
          }
        }
      }
    }
  });
}

template <typename S>
void convnd_bwd_input(const ConvGeom& g, const S* dy, const S* w, S* dx) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t in_sp = g.in_spatial();
  const std::size_t out_sp = g.out_spatial();
  const std::size_t k_sp = g.kernel_spatial();

  // Gather form: each input element sums the output positions it fed.
  parallel_for(g.batch * g.cin, [&](std::size_t jb, std::size_t je) {
    for (std::size_t job = jb; job < je; ++job) {
      const std::size_t n = job / g.cin;
      const std::size_t ci = job % g.cin;
      const std::size_t grp = ci / cin_g;
      const std::size_t ci_g = ci % cin_g;
      S* dxc = dx + (n * g.cin + ci) * in_sp;

      std::size_t i_flat = 0;
      for (std::size_t i0 = 0; i0 < g.in[0]; ++i0) {
        for (std::size_t i1 = 0; i1 < g.in[1]; ++i1) {
          for (std::size_t i2 = 0; i2 < g.in[2]; ++i2, ++i_flat) {
            S acc = S(0);
            for (std::size_t cg = 0; cg < cout_g; ++cg) {
              const std::size_t co = grp * cout_g + cg;
              const S* wk = w + (co * cin_g + ci_g) * k_sp;
              const S* dyc = dy + (n * g.cout + co) * out_sp;
              for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
                const std::ptrdiff_t t0 = static_cast<std::ptrdiff_t>(i0 + g.pad[0]) -
                                          static_cast<std::ptrdiff_t>(k0);
                if (t0 < 0 || t0 % static_cast<std::ptrdiff_t>(g.stride[0])) continue;
                const std::size_t o0 = static_cast<std::size_t>(t0) / g.stride[0];
                if (o0 >= g.out[0]) continue;
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
                  const std::ptrdiff_t t1 = static_cast<std::ptrdiff_t>(i1 + g.pad[1]) -
                                            static_cast<std::ptrdiff_t>(k1);
                  if (t1 < 0 || t1 % static_cast<std::ptrdiff_t>(g.stride[1])) continue;
                  const std::size_t o1 = static_cast<std::size_t>(t1) / g.stride[1];
                  if (o1 >= g.out[1]) continue;
                  for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                    const std::ptrdiff_t t2 = static_cast<std::ptrdiff_t>(i2 + g.pad[2]) -
                                              static_cast<std::ptrdiff_t>(k2);
                    if (t2 < 0 || t2 % static_cast<std::ptrdiff_t>(g.stride[2])) continue;
                    const std::size_t o2 = static_cast<std::size_t>(t2) / g.stride[2];
                    if (o2 >= g.out[2]) continue;
                    acc += wk[(k0 * g.kernel[1] + k1) * g.kernel[2] + k2] *
                           dyc[(o0 * g.out[1] + o1) * g.out[2] + o2];
                  }
                }
              }
            }
            dxc[i_flat] = acc;
          }
        }
      }
    }
  });
}

template <typename S>
void convnd_bwd_weight(const ConvGeom& g, const S* dy, const S* x, S* dw, S* db) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t in_sp = g.in_spatial();
  const std::size_t out_sp = g.out_spatial();

  parallel_for(g.cout, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t co = cb; co < ce; ++co) {
      const std::size_t grp = co / cout_g;
      if (db) {
        S acc = S(0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const S* dyc = dy + (n * g.cout + co) * out_sp;
          for (std::size_t o = 0; o < out_sp; ++o) acc += dyc[o];
        }
        db[co] = acc;
      }
      for (std::size_t ci_g = 0; ci_g < cin_g; ++ci_g) {
        const std::size_t ci = grp * cin_g + ci_g;
        for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
          for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
            for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
              S acc = S(0);
              for (std::size_t n = 0; n < g.batch; ++n) {
                const S* dyc = dy + (n * g.cout + co) * out_sp;
                const S* xc = x + (n * g.cin + ci) * in_sp;
                std::size_t o_flat = 0;
                for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                  const std::ptrdiff_t i0 = in_coord(o0, g.stride[0], k0, g.pad[0]);
                  const bool ok0 = i0 >= 0 && i0 < static_cast<std::ptrdiff_t>(g.in[0]);
                  for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                    const std::ptrdiff_t i1 = in_coord(o1, g.stride[1], k1, g.pad[1]);
                    const bool ok1 = i1 >= 0 && i1 < static_cast<std::ptrdiff_t>(g.in[1]);
                    for (std::size_t o2 = 0; o2 < g.out[2]; ++o2, ++o_flat) {
                      if (!ok0 || !ok1) continue;
                      const std::ptrdiff_t i2 = in_coord(o2, g.stride[2], k2, g.pad[2]);
                      if (i2 < 0 || i2 >= static_cast<std::ptrdiff_t>(g.in[2])) continue;
                      acc += dyc[o_flat] *
                             xc[(static_cast<std::size_t>(i0) * g.in[1] +
                                 static_cast<std::size_t>(i1)) * g.in[2] +
                                static_cast<std::size_t>(i2)];
                    }
                  }
                }
              }
              dw[((co * cin_g + ci_g) * g.kernel[0] + k0) * g.kernel[1] * g.kernel[2] +
                 k1 * g.kernel[2] + k2] = acc;
            }
          }
        }
      }
    }
  });
}

// ============================================================================
// 2D unit-stride fast path (pre-padded input)
// ============================================================================

template <typename S>
void conv2d_s1_fwd(const ConvGeom& g, const S* xp, const S* w, const S* bias, S* y) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t ph = g.in[0] + 2 * g.pad[0];
  const std::size_t pw = g.in[1] + 2 * g.pad[1];
  const std::size_t oh = g.out[0];
  const std::size_t ow = g.out[1];
  const std::size_t k_sp = g.kernel[0] * g.kernel[1];

  parallel_for(g.batch * g.cout, [&](std::size_t jb, std::size_t je) {
    for (std::size_t job = jb; job < je; ++job) {
      const std::size_t n = job / g.cout;
      const std::size_t co = job % g.cout;
      const std::size_t grp = co / cout_g;
      const S* xg = xp + (n * g.cin + grp * cin_g) * ph * pw;
      const S* wc = w + co * cin_g * k_sp;
      S* yc = y + (n * g.cout + co) * oh * ow;
      const S b = bias ? bias[co] : S(0);

      for (std::size_t oy = 0; oy < oh; ++oy) {
        S* yrow = yc + oy * ow;
        for (std::size_t ox = 0; ox < ow; ++ox) yrow[ox] = b;
        for (std::size_t ci = 0; ci < cin_g; ++ci) {
          const S* xc = xg + ci * ph * pw;
          const S* wk = wc + ci * k_sp;
          for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
            const S* xrow0 = xc + (oy + ky) * pw;
            for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
              const S wv = wk[ky * g.kernel[1] + kx];
              const S* xrow = xrow0 + kx;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                yrow[ox] += wv * xrow[ox];
              }
            }
          }
        }
      }
    }
  });
}

template <typename S>
void conv2d_s1_bwd_weight(const ConvGeom& g, const S* dy, const S* xp, S* dw, S* db) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t ph = g.in[0] + 2 * g.pad[0];
  const std::size_t pw = g.in[1] + 2 * g.pad[1];
  const std::size_t oh = g.out[0];
  const std::size_t ow = g.out[1];
  const std::size_t k_sp = g.kernel[0] * g.kernel[1];

  parallel_for(g.cout, [&](std::size_t cb, std::size_t ce) {
    std::vector<S> bins(k_sp * 8);
    for (std::size_t co = cb; co < ce; ++co) {
      const std::size_t grp = co / cout_g;
      if (db) {
        S acc = S(0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const S* dyc = dy + (n * g.cout + co) * oh * ow;
          for (std::size_t o = 0; o < oh * ow; ++o) acc += dyc[o];
        }
        db[co] = acc;
      }
      for (std::size_t ci_g = 0; ci_g < cin_g; ++ci_g) {
        const std::size_t ci = grp * cin_g + ci_g;
        // every kernel tap accumulates its 8 blocked bins in one pass over
        // (n, oy, ox); per-tap ordering matches a tap-at-a-time walk
        std::fill(bins.begin(), bins.end(), S(0));
        for (std::size_t n = 0; n < g.batch; ++n) {
          const S* dyc = dy + (n * g.cout + co) * oh * ow;
          const S* xc = xp + (n * g.cin + ci) * ph * pw;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const S* dyrow = dyc + oy * ow;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const S* xrow0 = xc + (oy + ky) * pw;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                S* tap = bins.data() + (ky * g.kernel[1] + kx) * 8;
                const S* xrow = xrow0 + kx;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  tap[ox & 7] += dyrow[ox] * xrow[ox];
                }
              }
            }
          }
        }
        for (std::size_t t = 0; t < k_sp; ++t) {
          dw[(co * cin_g + ci_g) * k_sp + t] = combine_bins8(bins.data() + t * 8);
        }
      }
    }
  });
}

// ============================================================================
// Elementwise / fused loops
// ============================================================================

template <typename S>
void residual_gate_fwd(const S* x, const S* m, S* y,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
  parallel_for(outer, [&](std::size_t ob, std::size_t oe) {
    for (std::size_t o = ob; o < oe; ++o) {
      const S* mrow = m + o * inner;
      for (std::size_t mm = 0; mm < mid; ++mm) {
        const std::size_t base = (o * mid + mm) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          y[base + i] = x[base + i] + x[base + i] * mrow[i];
        }
      }
    }
  });
}

template <typename S>
void residual_gate_bwd(const S* g, const S* x, const S* m, S* dx, S* dm,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
  parallel_for(outer, [&](std::size_t ob, std::size_t oe) {
    for (std::size_t o = ob; o < oe; ++o) {
      const S* mrow = m + o * inner;
      S* dmrow = dm + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dmrow[i] = S(0);
      for (std::size_t mm = 0; mm < mid; ++mm) {
        const std::size_t base = (o * mid + mm) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          dx[base + i] = g[base + i] + g[base + i] * mrow[i];
          dmrow[i] += g[base + i] * x[base + i];
        }
      }
    }
  });
}

template <typename S>
void scale_shift(const S* x, const S* a, const S* b, S* y,
                 std::size_t rows, std::size_t arows, std::size_t cols) {
  parallel_for(rows, [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      const S av = a[r % arows];
      const S bv = b[r % arows];
      const S* xr = x + r * cols;
      S* yr = y + r * cols;
      for (std::size_t i = 0; i < cols; ++i) yr[i] = av * xr[i] + bv;
    }
  });
}

template <typename S>
void sgd_momentum_update(S* x, const S* g, S* v, std::size_t n,
                         S lr, S momentum, S weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const S step = g[i] + weight_decay * x[i];
    v[i] = momentum * v[i] + step;
    x[i] = x[i] - lr * v[i];
  }
}

template <typename S>
void relu_fwd(const S* x, S* y, std::size_t n) {
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
  });
}

template <typename S>
void relu_bwd(const S* g, const S* x, S* dx, std::size_t n) {
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) dx[i] = x[i] > S(0) ? g[i] : S(0);
  });
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
  template void relu_bwd<S>(const S*, const S*, S*, std::size_t);

ACTIONKIT_INSTANTIATE(float)
ACTIONKIT_INSTANTIATE(double)
#undef ACTIONKIT_INSTANTIATE

}  // namespace actionkit::kernels::scalar
