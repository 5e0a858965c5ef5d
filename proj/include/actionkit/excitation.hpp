#pragma once

#include <cstddef>

#include "actionkit/autodiff.hpp"
#include "actionkit/rng.hpp"

namespace actionkit {

inline constexpr std::size_t kReduceRatio = 16;

// Squeeze width used by the channel and motion paths; tiny channel counts
// stay legal.
inline std::size_t reduced_channels(std::size_t channels,
                                    std::size_t ratio = kReduceRatio) {
  const std::size_t r = channels / ratio;
  return r < 1 ? 1 : r;
}

template <typename S>
inline Tensor<S> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng,
                                double gain = 1.0) {
  Tensor<S> t(std::move(shape));
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
  return t;
}

// ============================================================================
// Path weights
// ============================================================================
//
// Kernels get fan-in-scaled uniform init, biases start at zero. Masks then
// start scattered around 0.5, which keeps gradients alive on every path from
// the first step.

// Single-channel 3x3x3 spatio-temporal kernel.
template <typename S>
struct SteWeights {
  Parameter<S> kernel;  // (1, 1, 3, 3, 3)
  Parameter<S> bias;    // (1)

  static SteWeights init(Rng& rng) {
    SteWeights w;
    // higher gain: this single kernel is the whole path, so its mask should
    // start with meaningful spatio-temporal variation
    w.kernel = Parameter<S>(fan_in_uniform<S>({1, 1, 3, 3, 3}, 27, rng, 3.0));
    w.bias = Parameter<S>(Tensor<S>::zeros({1}));
    return w;
  }
};

// Squeeze -> temporal 1D conv -> expand, gating per channel.
template <typename S>
struct CeWeights {
  std::size_t channels = 0;
  std::size_t reduced = 0;
  Parameter<S> squeeze_w;   // (C/r, C, 1, 1)
  Parameter<S> squeeze_b;   // (C/r)
  Parameter<S> temporal_w;  // (C/r, C/r, 3)
  Parameter<S> temporal_b;  // (C/r)
  Parameter<S> expand_w;    // (C, C/r, 1, 1)
  Parameter<S> expand_b;    // (C)

  static CeWeights init(std::size_t channels, Rng& rng) {
    CeWeights w;
    w.channels = channels;
    w.reduced = reduced_channels(channels);
    w.squeeze_w = Parameter<S>(
        fan_in_uniform<S>({w.reduced, channels, 1, 1}, channels, rng));
    w.squeeze_b = Parameter<S>(Tensor<S>::zeros({w.reduced}));
    w.temporal_w = Parameter<S>(
        fan_in_uniform<S>({w.reduced, w.reduced, 3}, 3 * w.reduced, rng));
    w.temporal_b = Parameter<S>(Tensor<S>::zeros({w.reduced}));
    w.expand_w = Parameter<S>(
        fan_in_uniform<S>({channels, w.reduced, 1, 1}, w.reduced, rng));
    w.expand_b = Parameter<S>(Tensor<S>::zeros({channels}));
    return w;
  }
};

// Squeeze -> depthwise 3x3 adjacent-frame difference -> expand.
template <typename S>
struct MeWeights {
  std::size_t channels = 0;
  std::size_t reduced = 0;
  Parameter<S> squeeze_w;  // (C/r, C, 1, 1)
  Parameter<S> squeeze_b;  // (C/r)
  Parameter<S> diff_w;     // (C/r, 1, 3, 3) depthwise
  Parameter<S> diff_b;     // (C/r)
  Parameter<S> expand_w;   // (C, C/r, 1, 1)
  Parameter<S> expand_b;   // (C)

  static MeWeights init(std::size_t channels, Rng& rng) {
    MeWeights w;
    w.channels = channels;
    w.reduced = reduced_channels(channels);
    w.squeeze_w = Parameter<S>(
        fan_in_uniform<S>({w.reduced, channels, 1, 1}, channels, rng));
    w.squeeze_b = Parameter<S>(Tensor<S>::zeros({w.reduced}));
    w.diff_w = Parameter<S>(fan_in_uniform<S>({w.reduced, 1, 3, 3}, 9, rng));
    w.diff_b = Parameter<S>(Tensor<S>::zeros({w.reduced}));
    w.expand_w = Parameter<S>(
        fan_in_uniform<S>({channels, w.reduced, 1, 1}, w.reduced, rng));
    w.expand_b = Parameter<S>(Tensor<S>::zeros({channels}));
    return w;
  }
};

template <typename S>
struct ActionWeights {
  SteWeights<S> ste;
  CeWeights<S> ce;
  MeWeights<S> me;

  static ActionWeights init(std::size_t channels, Rng& rng) {
    ActionWeights w;
    w.ste = SteWeights<S>::init(rng);
    w.ce = CeWeights<S>::init(channels, rng);
    w.me = MeWeights<S>::init(channels, rng);
    return w;
  }
};

// ============================================================================
// Tape-side views
// ============================================================================

template <typename S>
struct SteVars {
  Var<S> kernel, bias;
};
template <typename S>
struct CeVars {
  Var<S> squeeze_w, squeeze_b, temporal_w, temporal_b, expand_w, expand_b;
};
template <typename S>
struct MeVars {
  Var<S> squeeze_w, squeeze_b, diff_w, diff_b, expand_w, expand_b;
};
template <typename S>
struct ActionVars {
  SteVars<S> ste;
  CeVars<S> ce;
  MeVars<S> me;
};

template <typename S>
SteVars<S> lift(Tape<S>& t, SteWeights<S>& w) {
  return {t.param(w.kernel), t.param(w.bias)};
}
template <typename S>
CeVars<S> lift(Tape<S>& t, CeWeights<S>& w) {
  return {t.param(w.squeeze_w), t.param(w.squeeze_b), t.param(w.temporal_w),
          t.param(w.temporal_b), t.param(w.expand_w), t.param(w.expand_b)};
}
template <typename S>
MeVars<S> lift(Tape<S>& t, MeWeights<S>& w) {
  return {t.param(w.squeeze_w), t.param(w.squeeze_b), t.param(w.diff_w),
          t.param(w.diff_b),    t.param(w.expand_w),  t.param(w.expand_b)};
}
template <typename S>
ActionVars<S> lift(Tape<S>& t, ActionWeights<S>& w) {
  return {lift(t, w.ste), lift(t, w.ce), lift(t, w.me)};
}

namespace detail {

template <typename S>
inline void require_segment_batch(const Tensor<S>& x) {
  if (x.rank() != 5) {
    throw ShapeError("excitation path expects a (N,T,C,H,W) tensor, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace detail

// ============================================================================
// Forward paths. Every path returns X + X*M with its own mask M in (0,1);
// output shape equals input shape.
// ============================================================================

// Spatio-temporal gate: channel mean -> 3x3x3 conv over (T,H,W) -> sigmoid.
// The mask has channel extent 1 and gates all channels alike.
template <typename S>
Var<S> ste_forward(Tape<S>& t, Var<S> x, const SteVars<S>& w) {
  detail::require_segment_batch(t.value(x));
  const Shape& s = t.value(x).shape();
  const std::size_t n = s[0], tt = s[1], h = s[3], ww = s[4];

  Var<S> f = t.mean_axis(x, 2, /*keep=*/true);         // (N,T,1,H,W)
  f = t.reshape(f, {n, 1, tt, h, ww});                 // (N,1,T,H,W)
  ConvOpts opts;
  opts.rank = 3;
  opts.pad = {1, 1, 1};
  Var<S> fo = t.convolve(f, w.kernel, w.bias, opts);   // (N,1,T,H,W)
  fo = t.reshape(fo, {n, tt, 1, h, ww});
  Var<S> m = t.sigmoid(fo);
  return t.broadcast_mul_add(x, m);
}

// Channel gate: spatial mean -> 1x1 squeeze -> temporal 1D conv (kernel 3,
// pad 1) over segments -> 1x1 expand -> sigmoid.
template <typename S>
Var<S> ce_forward(Tape<S>& t, Var<S> x, const CeVars<S>& w) {
  detail::require_segment_batch(t.value(x));
  const Shape& s = t.value(x).shape();
  const std::size_t n = s[0], tt = s[1], c = s[2];
  const std::size_t red = t.value(w.squeeze_w).shape()[0];

  Var<S> f = t.mean_axis(x, 4, /*keep=*/true);
  f = t.mean_axis(f, 3, /*keep=*/true);                       // (N,T,C,1,1)
  f = t.reshape(f, {n * tt, c, 1, 1});
  Var<S> sq = t.convolve(f, w.squeeze_w, w.squeeze_b, ConvOpts{});  // (N*T,C/r,1,1)
  Var<S> seq = t.permute(t.reshape(sq, {n, tt, red}), {0, 2, 1});   // (N,C/r,T)
  ConvOpts temporal;
  temporal.rank = 1;
  temporal.pad = {1, 0, 0};
  Var<S> tc = t.convolve(seq, w.temporal_w, w.temporal_b, temporal);
  Var<S> back = t.reshape(t.permute(tc, {0, 2, 1}), {n * tt, red, 1, 1});
  Var<S> ex = t.convolve(back, w.expand_w, w.expand_b, ConvOpts{});  // (N*T,C,1,1)
  Var<S> m = t.sigmoid(t.reshape(ex, {n, tt, c, 1, 1}));
  return t.broadcast_mul_add(x, m);
}

// Motion gate: squeeze -> depthwise 3x3 conv of the next frame minus the
// current frame (zero slice appended at t = T-1) -> spatial mean -> expand ->
// sigmoid.
template <typename S>
Var<S> me_forward(Tape<S>& t, Var<S> x, const MeVars<S>& w) {
  detail::require_segment_batch(t.value(x));
  const Shape& s = t.value(x).shape();
  const std::size_t n = s[0], tt = s[1], c = s[2], h = s[3], ww = s[4];
  const std::size_t red = t.value(w.squeeze_w).shape()[0];

  Var<S> flat = t.reshape(x, {n * tt, c, h, ww});
  Var<S> sq = t.convolve(flat, w.squeeze_w, w.squeeze_b, ConvOpts{});  // (N*T,C/r,H,W)
  ConvOpts spatial;
  spatial.pad = {1, 1, 0};
  spatial.groups = red;
  Var<S> conv = t.convolve(sq, w.diff_w, w.diff_b, spatial);           // (N*T,C/r,H,W)
  Var<S> diff = t.temporal_forward_diff(t.reshape(conv, {n, tt, red, h, ww}),
                                        t.reshape(sq, {n, tt, red, h, ww}));
  Var<S> pooled = t.mean_axis(t.mean_axis(diff, 4, true), 3, true);    // (N,T,C/r,1,1)
  Var<S> ex = t.convolve(t.reshape(pooled, {n * tt, red, 1, 1}), w.expand_w,
                         w.expand_b, ConvOpts{});
  Var<S> m = t.sigmoid(t.reshape(ex, {n, tt, c, 1, 1}));
  return t.broadcast_mul_add(x, m);
}

// Element-wise sum of the three excited path outputs.
template <typename S>
Var<S> action_forward(Tape<S>& t, Var<S> x, const ActionVars<S>& w) {
  Var<S> a = ste_forward(t, x, w.ste);
  Var<S> b = ce_forward(t, x, w.ce);
  Var<S> c = me_forward(t, x, w.me);
  return t.add(t.add(a, b), c);
}

}  // namespace actionkit
