// AVX2 kernel variants. Must stay value-identical to the scalar reference:
// multiply and add are kept separate (no fma contraction) and reductions use
// the same 8-bin blocked order as the scalar twin.

#include "kernels_impl.hpp"

#if ACTIONKIT_X86

#include <immintrin.h>

#include <cstdint>

#include "actionkit/parallel.hpp"

namespace actionkit::kernels::avx2 {

namespace {

inline __m256i tail_mask32(std::size_t t) {
  alignas(32) std::int32_t m[8];
  for (std::size_t i = 0; i < 8; ++i) m[i] = i < t ? -1 : 0;
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
}

inline __m256i tail_mask64(std::size_t t) {
  alignas(32) std::int64_t m[4];
  for (std::size_t i = 0; i < 4; ++i) m[i] = i < t ? -1 : 0;
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
}

}  // namespace

// ============================================================================
// conv2d forward (unit stride, pre-padded input)
// ============================================================================

void conv2d_s1_fwd(const ConvGeom& g, const float* xp, const float* w,
                   const float* bias, float* y) {
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
      const float* xg = xp + (n * g.cin + grp * cin_g) * ph * pw;
      const float* wc = w + co * cin_g * k_sp;
      float* yc = y + (n * g.cout + co) * oh * ow;
      const float b = bias ? bias[co] : 0.0f;
      const __m256 bv = _mm256_set1_ps(b);

      if (ow == 8) {
        // whole rows fit one vector; block four rows to share the broadcasts
        std::size_t oy = 0;
        for (; oy + 4 <= oh; oy += 4) {
          __m256 a0 = bv, a1 = bv, a2 = bv, a3 = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256 wv = _mm256_set1_ps(wk[ky * g.kernel[1] + kx]);
                a0 = _mm256_add_ps(a0, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx)));
                a1 = _mm256_add_ps(a1, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + pw)));
                a2 = _mm256_add_ps(a2, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 2 * pw)));
                a3 = _mm256_add_ps(a3, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 3 * pw)));
              }
            }
          }
          _mm256_storeu_ps(yc + oy * 8, a0);
          _mm256_storeu_ps(yc + (oy + 1) * 8, a1);
          _mm256_storeu_ps(yc + (oy + 2) * 8, a2);
          _mm256_storeu_ps(yc + (oy + 3) * 8, a3);
        }
        for (; oy < oh; ++oy) {
          __m256 acc = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256 wv = _mm256_set1_ps(wk[ky * g.kernel[1] + kx]);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx)));
              }
            }
          }
          _mm256_storeu_ps(yc + oy * 8, acc);
        }
        continue;
      }
      for (std::size_t oy = 0; oy < oh; ++oy) {
        float* yrow = yc + oy * ow;
        std::size_t ox = 0;
        // up to four row accumulators amortize the (ci, ky, kx) walk
        for (; ox + 32 <= ow; ox += 32) {
          __m256 a0 = bv, a1 = bv, a2 = bv, a3 = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256 wv = _mm256_set1_ps(wk[ky * g.kernel[1] + kx]);
                a0 = _mm256_add_ps(a0, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx)));
                a1 = _mm256_add_ps(a1, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 8)));
                a2 = _mm256_add_ps(a2, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 16)));
                a3 = _mm256_add_ps(a3, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 24)));
              }
            }
          }
          _mm256_storeu_ps(yrow + ox, a0);
          _mm256_storeu_ps(yrow + ox + 8, a1);
          _mm256_storeu_ps(yrow + ox + 16, a2);
          _mm256_storeu_ps(yrow + ox + 24, a3);
        }
        for (; ox + 16 <= ow; ox += 16) {
          __m256 a0 = bv, a1 = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256 wv = _mm256_set1_ps(wk[ky * g.kernel[1] + kx]);
                a0 = _mm256_add_ps(a0, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx)));
                a1 = _mm256_add_ps(a1, _mm256_mul_ps(wv, _mm256_loadu_ps(xrow0 + kx + 8)));
              }
            }
          }
          _mm256_storeu_ps(yrow + ox, a0);
          _mm256_storeu_ps(yrow + ox + 8, a1);
        }
        for (; ox + 8 <= ow; ox += 8) {
          __m256 acc = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256 wv = _mm256_set1_ps(wk[ky * g.kernel[1] + kx]);
                const __m256 xv = _mm256_loadu_ps(xrow0 + kx);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(wv, xv));
              }
            }
          }
          _mm256_storeu_ps(yrow + ox, acc);
        }
        for (; ox < ow; ++ox) {
          float acc = b;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const float* xc = xg + ci * ph * pw;
            const float* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const float* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                acc += wk[ky * g.kernel[1] + kx] * xrow0[kx];
              }
            }
          }
          yrow[ox] = acc;
        }
      }
    }
  });
}

void conv2d_s1_fwd(const ConvGeom& g, const double* xp, const double* w,
                   const double* bias, double* y) {
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
      const double* xg = xp + (n * g.cin + grp * cin_g) * ph * pw;
      const double* wc = w + co * cin_g * k_sp;
      double* yc = y + (n * g.cout + co) * oh * ow;
      const double b = bias ? bias[co] : 0.0;
      const __m256d bv = _mm256_set1_pd(b);

      for (std::size_t oy = 0; oy < oh; ++oy) {
        double* yrow = yc + oy * ow;
        std::size_t ox = 0;
        for (; ox + 4 <= ow; ox += 4) {
          __m256d acc = bv;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const double* xc = xg + ci * ph * pw;
            const double* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const double* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                const __m256d wv = _mm256_set1_pd(wk[ky * g.kernel[1] + kx]);
                const __m256d xv = _mm256_loadu_pd(xrow0 + kx);
                acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, xv));
              }
            }
          }
          _mm256_storeu_pd(yrow + ox, acc);
        }
        for (; ox < ow; ++ox) {
          double acc = b;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const double* xc = xg + ci * ph * pw;
            const double* wk = wc + ci * k_sp;
            for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
              const double* xrow0 = xc + (oy + ky) * pw + ox;
              for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                acc += wk[ky * g.kernel[1] + kx] * xrow0[kx];
              }
            }
          }
          yrow[ox] = acc;
        }
      }
    }
  });
}

// ============================================================================
// conv2d weight gradient (8-bin blocked reduction)
// ============================================================================

void conv2d_s1_bwd_weight(const ConvGeom& g, const float* dy, const float* xp,
                          float* dw, float* db) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t ph = g.in[0] + 2 * g.pad[0];
  const std::size_t pw = g.in[1] + 2 * g.pad[1];
  const std::size_t oh = g.out[0];
  const std::size_t ow = g.out[1];
  const std::size_t k_sp = g.kernel[0] * g.kernel[1];
  const std::size_t tail = ow & 7;
  const __m256i tmask = tail_mask32(tail);
  if (k_sp > 9) {  // larger kernels fall back to the scalar reference
    scalar::conv2d_s1_bwd_weight<float>(g, dy, xp, dw, db);
    return;
  }

  parallel_for(g.cout, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t co = cb; co < ce; ++co) {
      const std::size_t grp = co / cout_g;
      if (db) {
        float acc = 0.0f;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const float* dyc = dy + (n * g.cout + co) * oh * ow;
          for (std::size_t o = 0; o < oh * ow; ++o) acc += dyc[o];
        }
        db[co] = acc;
      }
      for (std::size_t ci_g = 0; ci_g < cin_g; ++ci_g) {
        const std::size_t ci = grp * cin_g + ci_g;
        // one pass over (n, oy, ox); all kernel taps accumulate in registers
        __m256 acc[9];
        for (std::size_t t = 0; t < k_sp; ++t) acc[t] = _mm256_setzero_ps();
        for (std::size_t n = 0; n < g.batch; ++n) {
          const float* dyc = dy + (n * g.cout + co) * oh * ow;
          const float* xc = xp + (n * g.cin + ci) * ph * pw;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const float* dyrow = dyc + oy * ow;
            std::size_t ox = 0;
            for (; ox + 8 <= ow; ox += 8) {
              const __m256 dv = _mm256_loadu_ps(dyrow + ox);
              for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
                const float* xrow0 = xc + (oy + ky) * pw + ox;
                for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                  const std::size_t t = ky * g.kernel[1] + kx;
                  acc[t] = _mm256_add_ps(
                      acc[t], _mm256_mul_ps(dv, _mm256_loadu_ps(xrow0 + kx)));
                }
              }
            }
            if (tail) {
              const __m256 dv = _mm256_maskload_ps(dyrow + ox, tmask);
              for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
                const float* xrow0 = xc + (oy + ky) * pw + ox;
                for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
                  const std::size_t t = ky * g.kernel[1] + kx;
                  acc[t] = _mm256_add_ps(
                      acc[t], _mm256_mul_ps(dv, _mm256_maskload_ps(xrow0 + kx, tmask)));
                }
              }
            }
          }
        }
        for (std::size_t t = 0; t < k_sp; ++t) {
          alignas(32) float bins[8];
          _mm256_store_ps(bins, acc[t]);
          dw[(co * cin_g + ci_g) * k_sp + t] = scalar::combine_bins8(bins);
        }
      }
    }
  });
}

void conv2d_s1_bwd_weight(const ConvGeom& g, const double* dy, const double* xp,
                          double* dw, double* db) {
  const std::size_t cin_g = g.cin / g.groups;
  const std::size_t cout_g = g.cout / g.groups;
  const std::size_t ph = g.in[0] + 2 * g.pad[0];
  const std::size_t pw = g.in[1] + 2 * g.pad[1];
  const std::size_t oh = g.out[0];
  const std::size_t ow = g.out[1];
  const std::size_t k_sp = g.kernel[0] * g.kernel[1];
  const std::size_t tail = ow & 7;
  const __m256i tmask_lo = tail_mask64(tail > 4 ? 4 : tail);
  const __m256i tmask_hi = tail_mask64(tail > 4 ? tail - 4 : 0);

  parallel_for(g.cout, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t co = cb; co < ce; ++co) {
      const std::size_t grp = co / cout_g;
      if (db) {
        double acc = 0.0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* dyc = dy + (n * g.cout + co) * oh * ow;
          for (std::size_t o = 0; o < oh * ow; ++o) acc += dyc[o];
        }
        db[co] = acc;
      }
      for (std::size_t ci_g = 0; ci_g < cin_g; ++ci_g) {
        const std::size_t ci = grp * cin_g + ci_g;
        for (std::size_t ky = 0; ky < g.kernel[0]; ++ky) {
          for (std::size_t kx = 0; kx < g.kernel[1]; ++kx) {
            __m256d acc_lo = _mm256_setzero_pd();
            __m256d acc_hi = _mm256_setzero_pd();
            for (std::size_t n = 0; n < g.batch; ++n) {
              const double* dyc = dy + (n * g.cout + co) * oh * ow;
              const double* xc = xp + (n * g.cin + ci) * ph * pw;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const double* dyrow = dyc + oy * ow;
                const double* xrow = xc + (oy + ky) * pw + kx;
                std::size_t ox = 0;
                for (; ox + 8 <= ow; ox += 8) {
                  acc_lo = _mm256_add_pd(acc_lo, _mm256_mul_pd(_mm256_loadu_pd(dyrow + ox),
                                                               _mm256_loadu_pd(xrow + ox)));
                  acc_hi = _mm256_add_pd(acc_hi, _mm256_mul_pd(_mm256_loadu_pd(dyrow + ox + 4),
                                                               _mm256_loadu_pd(xrow + ox + 4)));
                }
                if (tail) {
                  acc_lo = _mm256_add_pd(
                      acc_lo, _mm256_mul_pd(_mm256_maskload_pd(dyrow + ox, tmask_lo),
                                            _mm256_maskload_pd(xrow + ox, tmask_lo)));
                  if (tail > 4) {
                    acc_hi = _mm256_add_pd(
                        acc_hi, _mm256_mul_pd(_mm256_maskload_pd(dyrow + ox + 4, tmask_hi),
                                              _mm256_maskload_pd(xrow + ox + 4, tmask_hi)));
                  }
                }
              }
            }
            alignas(32) double bins[8];
            _mm256_store_pd(bins, acc_lo);
            _mm256_store_pd(bins + 4, acc_hi);
            dw[(co * cin_g + ci_g) * k_sp + ky * g.kernel[1] + kx] =
                scalar::combine_bins8(bins);
          }
        }
      }
    }
  });
}

// ============================================================================
// Elementwise / fused loops
// ============================================================================

void residual_gate_fwd(const float* x, const float* m, float* y,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
  parallel_for(outer, [&](std::size_t ob, std::size_t oe) {
    for (std::size_t o = ob; o < oe; ++o) {
      const float* mrow = m + o * inner;
      if (inner == 1) {
        const __m256 mv = _mm256_set1_ps(mrow[0]);
        const std::size_t base = o * mid;
        std::size_t i = 0;
        for (; i + 8 <= mid; i += 8) {
          const __m256 xv = _mm256_loadu_ps(x + base + i);
          _mm256_storeu_ps(y + base + i, _mm256_add_ps(xv, _mm256_mul_ps(xv, mv)));
        }
        for (; i < mid; ++i) y[base + i] = x[base + i] + x[base + i] * mrow[0];
        continue;
      }
      for (std::size_t mm = 0; mm < mid; ++mm) {
        const std::size_t base = (o * mid + mm) * inner;
        std::size_t i = 0;
        for (; i + 8 <= inner; i += 8) {
          const __m256 xv = _mm256_loadu_ps(x + base + i);
          const __m256 mv = _mm256_loadu_ps(mrow + i);
          _mm256_storeu_ps(y + base + i, _mm256_add_ps(xv, _mm256_mul_ps(xv, mv)));
        }
        for (; i < inner; ++i) y[base + i] = x[base + i] + x[base + i] * mrow[i];
      }
    }
  });
}

void residual_gate_fwd(const double* x, const double* m, double* y,
                       std::size_t outer, std::size_t mid, std::size_t inner) {
  parallel_for(outer, [&](std::size_t ob, std::size_t oe) {
    for (std::size_t o = ob; o < oe; ++o) {
      const double* mrow = m + o * inner;
      if (inner == 1) {
        const __m256d mv = _mm256_set1_pd(mrow[0]);
        const std::size_t base = o * mid;
        std::size_t i = 0;
        for (; i + 4 <= mid; i += 4) {
          const __m256d xv = _mm256_loadu_pd(x + base + i);
          _mm256_storeu_pd(y + base + i, _mm256_add_pd(xv, _mm256_mul_pd(xv, mv)));
        }
        for (; i < mid; ++i) y[base + i] = x[base + i] + x[base + i] * mrow[0];
        continue;
      }
      for (std::size_t mm = 0; mm < mid; ++mm) {
        const std::size_t base = (o * mid + mm) * inner;
        std::size_t i = 0;
        for (; i + 4 <= inner; i += 4) {
          const __m256d xv = _mm256_loadu_pd(x + base + i);
          const __m256d mv = _mm256_loadu_pd(mrow + i);
          _mm256_storeu_pd(y + base + i, _mm256_add_pd(xv, _mm256_mul_pd(xv, mv)));
        }
        for (; i < inner; ++i) y[base + i] = x[base + i] + x[base + i] * mrow[i];
      }
    }
  });
}

void scale_shift(const float* x, const float* a, const float* b, float* y,
                 std::size_t rows, std::size_t arows, std::size_t cols) {
  parallel_for(rows, [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      const float av = a[r % arows];
      const float bv = b[r % arows];
      const __m256 avv = _mm256_set1_ps(av);
      const __m256 bvv = _mm256_set1_ps(bv);
      const float* xr = x + r * cols;
      float* yr = y + r * cols;
      std::size_t i = 0;
      for (; i + 8 <= cols; i += 8) {
        _mm256_storeu_ps(yr + i, _mm256_add_ps(_mm256_mul_ps(avv, _mm256_loadu_ps(xr + i)), bvv));
      }
      for (; i < cols; ++i) yr[i] = av * xr[i] + bv;
    }
  });
}

void scale_shift(const double* x, const double* a, const double* b, double* y,
                 std::size_t rows, std::size_t arows, std::size_t cols) {
  parallel_for(rows, [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      const double av = a[r % arows];
      const double bv = b[r % arows];
      const __m256d avv = _mm256_set1_pd(av);
      const __m256d bvv = _mm256_set1_pd(bv);
      const double* xr = x + r * cols;
      double* yr = y + r * cols;
      std::size_t i = 0;
      for (; i + 4 <= cols; i += 4) {
        _mm256_storeu_pd(yr + i, _mm256_add_pd(_mm256_mul_pd(avv, _mm256_loadu_pd(xr + i)), bvv));
      }
      for (; i < cols; ++i) yr[i] = av * xr[i] + bv;
    }
  });
}

void sgd_momentum_update(float* x, const float* g, float* v, std::size_t n,
                         float lr, float momentum, float weight_decay) {
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 mov = _mm256_set1_ps(momentum);
  const __m256 wdv = _mm256_set1_ps(weight_decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    const __m256 step = _mm256_add_ps(gv, _mm256_mul_ps(wdv, xv));
    vv = _mm256_add_ps(_mm256_mul_ps(mov, vv), step);
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(x + i, _mm256_sub_ps(xv, _mm256_mul_ps(lrv, vv)));
  }
  for (; i < n; ++i) {
    const float step = g[i] + weight_decay * x[i];
    v[i] = momentum * v[i] + step;
    x[i] = x[i] - lr * v[i];
  }
}

void sgd_momentum_update(double* x, const double* g, double* v, std::size_t n,
                         double lr, double momentum, double weight_decay) {
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d mov = _mm256_set1_pd(momentum);
  const __m256d wdv = _mm256_set1_pd(weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    const __m256d step = _mm256_add_pd(gv, _mm256_mul_pd(wdv, xv));
    vv = _mm256_add_pd(_mm256_mul_pd(mov, vv), step);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(x + i, _mm256_sub_pd(xv, _mm256_mul_pd(lrv, vv)));
  }
  for (; i < n; ++i) {
    const double step = g[i] + weight_decay * x[i];
    v[i] = momentum * v[i] + step;
    x[i] = x[i] - lr * v[i];
  }
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = b;
    for (; i + 8 <= e; i += 8) {
      _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    }
    for (; i < e; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  });
}

void relu_bwd(const float* g, const float* x, float* dx, std::size_t n) {
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = b;
    for (; i + 8 <= e; i += 8) {
      const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
      _mm256_storeu_ps(dx + i, _mm256_and_ps(_mm256_loadu_ps(g + i), mask));
    }
    for (; i < e; ++i) dx[i] = x[i] > 0.0f ? g[i] : 0.0f;
  });
}

}  // namespace actionkit::kernels::avx2

#endif  // ACTIONKIT_X86
