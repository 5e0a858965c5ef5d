#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "actionkit/kernels.hpp"
#include "actionkit/parallel.hpp"
#include "actionkit/tensor.hpp"

namespace actionkit {

// Learnable tensor plus its gradient and momentum buffers.
template <typename S>
struct Parameter {
  Tensor<S> value;
  Tensor<S> grad;
  Tensor<S> velocity;

  Parameter() = default;
  explicit Parameter(Tensor<S> v)
      : value(std::move(v)),
        grad(Tensor<S>::zeros(value.shape())),
        velocity(Tensor<S>::zeros(value.shape())) {}

  void zero_grad() {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = S(0);
  }
};

// v <- momentum*v + (grad + weight_decay*value); value <- value - lr*v.
// Gradients are zeroed afterwards.
template <typename S>
void sgd_momentum_step(const std::vector<Parameter<S>*>& params, S lr, S momentum,
                       S weight_decay) {
  for (Parameter<S>* p : params) {
    kernels::sgd_momentum_update(p->value.data(), p->grad.data(), p->velocity.data(),
                                 p->value.size(), lr, momentum, weight_decay);
    p->zero_grad();
  }
}

template <typename S>
struct BnState {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  explicit BnState(std::size_t channels)
      : running_mean(Tensor<S>::zeros({channels})),
        running_var(Tensor<S>::full({channels}, S(1))) {}
  BnState() = default;
};

struct ConvOpts {
  int rank = 2;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  std::size_t groups = 1;
};

template <typename S>
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in execution order, so walking the
// node list backwards is already a reverse topological order.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ------------------------------------------------------------

  Var<S> constant(Tensor<S> v) { return push(std::move(v), {}, nullptr, false); }

  Var<S> input(Tensor<S> v) { return push(std::move(v), {}, nullptr, true); }

  // One leaf per parameter per tape; repeated registration returns the
  // existing node.
  Var<S> param(Parameter<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<S>{it->second};
    Var<S> v = push(p.value, {}, nullptr, true);
    entries_[v.id].bound = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  const Tensor<S>& value(Var<S> v) const { return entries_.at(v.id).value; }

  const Tensor<S>& grad(Var<S> v) const {
    const Tensor<S>& g = grads_.at(v.id);
    if (g.size() == 0) {
      throw NumericError("gradient not populated; run backward first");
    }
    return g;
  }

  // ---- shape ops ----------------------------------------------------------

  Var<S> reshape(Var<S> x, Shape new_shape) {
    Tensor<S> out = value(x).reshaped(std::move(new_shape));
    const Shape back = value(x).shape();
    return push(std::move(out), {x.id},
                [px = x.id, back](Tape& t, int self) {
                  t.add_grad(px, t.grad_ref(self).reshaped(back));
                });
  }

  Var<S> permute(Var<S> x, std::vector<std::size_t> order) {
    Tensor<S> out = permuted(value(x), order);
    return push(std::move(out), {x.id},
                [px = x.id, inv = inverse_permutation(order)](Tape& t, int self) {
                  t.add_grad(px, permuted(t.grad_ref(self), inv));
                });
  }

  // ---- reductions ----------------------------------------------------------

  Var<S> mean_axis(Var<S> x, std::size_t axis, bool keep) {
    const Tensor<S>& xv = value(x);
    if (axis >= xv.rank()) throw ShapeError("mean_axis: axis out of range");
    const Shape& s = xv.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t ax = s[axis];

    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i == axis) {
        if (keep) out_shape.push_back(1);
      } else {
        out_shape.push_back(s[i]);
      }
    }
    if (out_shape.empty()) out_shape.push_back(1);

    Tensor<S> out(out_shape);
    const S* xd = xv.data();
    S* yd = out.data();
    const S invn = S(1) / static_cast<S>(ax);
    parallel_for(outer, [&](std::size_t ob, std::size_t oe) {
      for (std::size_t o = ob; o < oe; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          S acc = S(0);
          for (std::size_t t = 0; t < ax; ++t) acc += xd[(o * ax + t) * inner + i];
          yd[o * inner + i] = acc * invn;
        }
      }
    });

    return push(std::move(out), {x.id},
                [px = x.id, outer, ax, inner, invn](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dx(t.entries_[px].value.shape());
                  S* dxd = dx.data();
                  const S* gd = g.data();
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t tt = 0; tt < ax; ++tt) {
                      for (std::size_t i = 0; i < inner; ++i) {
                        dxd[(o * ax + tt) * inner + i] = gd[o * inner + i] * invn;
                      }
                    }
                  }
                  t.add_grad(px, std::move(dx));
                });
  }

  Var<S> sum_all(Var<S> x) {
    const Tensor<S>& xv = value(x);
    S acc = S(0);
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
    return push(Tensor<S>::scalar(acc), {x.id},
                [px = x.id](Tape& t, int self) {
                  const S g = t.grad_ref(self)[0];
                  t.add_grad(px, Tensor<S>::full(t.entries_[px].value.shape(), g));
                });
  }

  // ---- elementwise ----------------------------------------------------------

  Var<S> sigmoid(Var<S> x) {
    const Tensor<S>& xv = value(x);
    Tensor<S> out(xv.shape());
    kernels::sigmoid_fwd(xv.data(), out.data(), xv.size());
    return push(std::move(out), {x.id},
                [px = x.id](Tape& t, int self) {
                  const Tensor<S>& y = t.entries_[self].value;
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dx(y.shape());
                  for (std::size_t i = 0; i < y.size(); ++i) {
                    dx[i] = g[i] * y[i] * (S(1) - y[i]);
                  }
                  t.add_grad(px, std::move(dx));
                });
  }

  Var<S> relu(Var<S> x) {
    const Tensor<S>& xv = value(x);
    Tensor<S> out(xv.shape());
    kernels::relu_fwd(xv.data(), out.data(), xv.size());
    return push(std::move(out), {x.id},
                [px = x.id](Tape& t, int self) {
                  const Tensor<S>& xval = t.entries_[px].value;
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dx(xval.shape());
                  kernels::relu_bwd(g.data(), xval.data(), dx.data(), xval.size());
                  t.add_grad(px, std::move(dx));
                });
  }

  Var<S> add(Var<S> a, Var<S> b) {
    const Tensor<S>& av = value(a);
    const Tensor<S>& bv = value(b);
    if (av.shape() != bv.shape()) throw ShapeError("add: shape mismatch");
    Tensor<S> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return push(std::move(out), {a.id, b.id},
                [pa = a.id, pb = b.id](Tape& t, int self) {
                  if (t.needs(pa)) t.add_grad(pa, Tensor<S>(t.grad_ref(self)));
                  if (t.needs(pb)) t.add_grad(pb, Tensor<S>(t.grad_ref(self)));
                });
  }

  Var<S> mul(Var<S> a, Var<S> b) {
    const Tensor<S>& av = value(a);
    const Tensor<S>& bv = value(b);
    if (av.shape() != bv.shape()) throw ShapeError("mul: shape mismatch");
    Tensor<S> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return push(std::move(out), {a.id, b.id},
                [pa = a.id, pb = b.id](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  const Tensor<S>& avv = t.entries_[pa].value;
                  const Tensor<S>& bvv = t.entries_[pb].value;
                  if (t.needs(pa)) {
                    Tensor<S> da(avv.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bvv[i];
                    t.add_grad(pa, std::move(da));
                  }
                  if (t.needs(pb)) {
                    Tensor<S> db(bvv.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * avv[i];
                    t.add_grad(pb, std::move(db));
                  }
                });
  }

  Var<S> scale(Var<S> x, S c) {
    const Tensor<S>& xv = value(x);
    Tensor<S> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * c;
    return push(std::move(out), {x.id},
                [px = x.id, c](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dx(g.shape());
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * c;
                  t.add_grad(px, std::move(dx));
                });
  }

  // ---- Y = X + X*M with M broadcast along singleton axes --------------------

  Var<S> broadcast_mul_add(Var<S> x, Var<S> m) {
    const Tensor<S>& xv = value(x);
    const Tensor<S>& mv = value(m);
    if (mv.rank() != xv.rank()) {
      throw ShapeError("broadcast_mul_add: rank mismatch");
    }
    // broadcast axes = axes where m is 1 and x is larger; they must form one
    // contiguous block for the (outer, mid, inner) kernel view.
    std::size_t b0 = xv.rank(), b1 = xv.rank();
    for (std::size_t i = 0; i < xv.rank(); ++i) {
      const bool bcast = mv.shape()[i] == 1 && xv.shape()[i] != 1;
      if (!bcast && mv.shape()[i] != xv.shape()[i]) {
        throw ShapeError("broadcast_mul_add: shape " + shape_str(mv.shape()) +
                         " does not broadcast to " + shape_str(xv.shape()));
      }
      if (bcast) {
        if (b0 == xv.rank()) {
          b0 = i;
          b1 = i + 1;
        } else if (i == b1) {
          b1 = i + 1;
        } else {
          throw ShapeError("broadcast_mul_add: broadcast axes must be contiguous");
        }
      }
    }
    std::size_t outer = 1, mid = 1, inner = 1;
    for (std::size_t i = 0; i < xv.rank(); ++i) {
      if (i < b0) outer *= xv.shape()[i];
      else if (i < b1) mid *= xv.shape()[i];
      else inner *= xv.shape()[i];
    }
    Tensor<S> out(xv.shape());
    kernels::residual_gate_fwd(xv.data(), mv.data(), out.data(), outer, mid, inner);
    return push(std::move(out), {x.id, m.id},
                [px = x.id, pm = m.id, outer, mid, inner](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  const Tensor<S>& xval = t.entries_[px].value;
                  const Tensor<S>& mval = t.entries_[pm].value;
                  Tensor<S> dx(xval.shape());
                  Tensor<S> dm(mval.shape());
                  kernels::residual_gate_bwd(g.data(), xval.data(), mval.data(),
                                             dx.data(), dm.data(), outer, mid, inner);
                  if (t.needs(px)) t.add_grad(px, std::move(dx));
                  if (t.needs(pm)) t.add_grad(pm, std::move(dm));
                });
  }

  // ---- convolution -----------------------------------------------------------

  Var<S> convolve(Var<S> x, Var<S> w, std::optional<Var<S>> bias, const ConvOpts& opts) {
    const kernels::ConvGeom geom = conv_geometry(value(x).shape(), value(w).shape(), opts);
    if (bias && value(*bias).size() != geom.cout) {
      throw ShapeError("convolve: bias extent must equal output channels");
    }

    Shape out_shape{geom.batch, geom.cout};
    for (int d = 0; d < geom.rank; ++d) out_shape.push_back(geom.out[d]);
    Tensor<S> out(out_shape);

    const S* bias_ptr = bias ? value(*bias).data() : nullptr;
    if (geom.rank == 2 && geom.unit_stride()) {
      Tensor<S> xp = pad2d(value(x), geom);
      kernels::conv2d_s1_fwd(geom, xp.data(), value(w).data(), bias_ptr, out.data());
    } else {
      kernels::convnd_fwd(geom, value(x).data(), value(w).data(), bias_ptr, out.data());
    }

    std::vector<int> parents{x.id, w.id};
    if (bias) parents.push_back(bias->id);
    const int bias_id = bias ? bias->id : -1;
    return push(std::move(out), std::move(parents),
                [px = x.id, pw = w.id, bias_id, geom](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  const Tensor<S>& xval = t.entries_[px].value;
                  const Tensor<S>& wval = t.entries_[pw].value;
                  const bool fast = geom.rank == 2 && geom.unit_stride();

                  const bool need_w = t.needs(pw);
                  const bool need_b = bias_id >= 0 && t.needs(bias_id);
                  if (need_w || need_b) {
                    Tensor<S> dw(wval.shape());
                    Tensor<S> db = need_b ? Tensor<S>(t.entries_[bias_id].value.shape())
                                          : Tensor<S>();
                    S* dbp = need_b ? db.data() : nullptr;
                    if (fast) {
                      Tensor<S> xp = pad2d(xval, geom);
                      kernels::conv2d_s1_bwd_weight(geom, g.data(), xp.data(), dw.data(), dbp);
                    } else {
                      kernels::convnd_bwd_weight(geom, g.data(), xval.data(), dw.data(), dbp);
                    }
                    if (need_w) t.add_grad(pw, std::move(dw));
                    if (need_b) t.add_grad(bias_id, std::move(db));
                  }

                  if (t.needs(px)) {
                    Tensor<S> dx(xval.shape());
                    if (fast) {
                      // dx is itself a unit-stride correlation of the padded
                      // output gradient with the flipped, channel-transposed
                      // kernel; this reuses the dispatched forward kernel.
                      kernels::ConvGeom tg = geom;
                      tg.cin = geom.cout;
                      tg.cout = geom.cin;
                      tg.in = geom.out;
                      tg.out = geom.in;
                      tg.pad = {geom.kernel[0] - 1 - geom.pad[0],
                                geom.kernel[1] - 1 - geom.pad[1], 0};
                      Tensor<S> gp = pad2d(g, tg);
                      Tensor<S> wt = flip_transpose_weights(wval, geom);
                      kernels::conv2d_s1_fwd(tg, gp.data(), wt.data(),
                                             static_cast<const S*>(nullptr), dx.data());
                    } else {
                      kernels::convnd_bwd_input(geom, g.data(), wval.data(), dx.data());
                    }
                    t.add_grad(px, std::move(dx));
                  }
                });
  }

  // ---- affine map along the last axis ---------------------------------------

  Var<S> linear(Var<S> x, Var<S> w, std::optional<Var<S>> bias) {
    const Tensor<S>& xv = value(x);
    const Tensor<S>& wv = value(w);
    if (wv.rank() != 2) throw ShapeError("linear: weight must be (out, in)");
    const std::size_t in = wv.shape()[1];
    const std::size_t outf = wv.shape()[0];
    if (xv.rank() < 1 || xv.shape().back() != in) {
      throw ShapeError("linear: input extent " +
                       std::to_string(xv.rank() ? xv.shape().back() : 0) +
                       " does not match weight input extent " + std::to_string(in));
    }
    if (bias && value(*bias).size() != outf) throw ShapeError("linear: bias extent mismatch");
    const std::size_t rows = xv.size() / in;

    Shape out_shape = xv.shape();
    out_shape.back() = outf;
    Tensor<S> out(out_shape);
    const S* bp = bias ? value(*bias).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const S* xr = xv.data() + r * in;
      S* yr = out.data() + r * outf;
      for (std::size_t o = 0; o < outf; ++o) {
        S acc = bp ? bp[o] : S(0);
        const S* wr = wv.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }

    std::vector<int> parents{x.id, w.id};
    if (bias) parents.push_back(bias->id);
    const int bias_id = bias ? bias->id : -1;
    return push(std::move(out), std::move(parents),
                [px = x.id, pw = w.id, bias_id, rows, in, outf](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  const Tensor<S>& xval = t.entries_[px].value;
                  const Tensor<S>& wval = t.entries_[pw].value;
                  if (t.needs(px)) {
                    Tensor<S> dx(xval.shape());
                    for (std::size_t r = 0; r < rows; ++r) {
                      const S* gr = g.data() + r * outf;
                      S* dxr = dx.data() + r * in;
                      for (std::size_t i = 0; i < in; ++i) {
                        S acc = S(0);
                        for (std::size_t o = 0; o < outf; ++o) acc += gr[o] * wval[o * in + i];
                        dxr[i] = acc;
                      }
                    }
                    t.add_grad(px, std::move(dx));
                  }
                  if (t.needs(pw)) {
                    Tensor<S> dw(wval.shape());
                    for (std::size_t o = 0; o < outf; ++o) {
                      for (std::size_t i = 0; i < in; ++i) {
                        S acc = S(0);
                        for (std::size_t r = 0; r < rows; ++r) {
                          acc += g[r * outf + o] * xval[r * in + i];
                        }
                        dw[o * in + i] = acc;
                      }
                    }
                    t.add_grad(pw, std::move(dw));
                  }
                  if (bias_id >= 0 && t.needs(bias_id)) {
                    Tensor<S> db(t.entries_[bias_id].value.shape());
                    for (std::size_t o = 0; o < outf; ++o) {
                      S acc = S(0);
                      for (std::size_t r = 0; r < rows; ++r) acc += g[r * outf + o];
                      db[o] = acc;
                    }
                    t.add_grad(bias_id, std::move(db));
                  }
                });
  }

  // ---- classification loss ---------------------------------------------------

  Var<S> softmax_xent(Var<S> logits, const std::vector<std::size_t>& labels) {
    const Tensor<S>& lv = value(logits);
    if (lv.rank() != 2) throw ShapeError("softmax_xent: logits must be (batch, classes)");
    const std::size_t n = lv.shape()[0];
    const std::size_t k = lv.shape()[1];
    if (labels.size() != n) throw DataError("softmax_xent: label count mismatch");
    for (std::size_t lbl : labels) {
      if (lbl >= k) throw DataError("softmax_xent: label out of range");
    }
    Tensor<S> probs({n, k});
    S loss = S(0);
    for (std::size_t r = 0; r < n; ++r) {
      const S* row = lv.data() + r * k;
      S mx = row[0];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      S denom = S(0);
      for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
      const S lse = mx + std::log(denom);
      for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - lse);
      loss += lse - row[labels[r]];
    }
    loss /= static_cast<S>(n);
    return push(Tensor<S>::scalar(loss), {logits.id},
                [pl = logits.id, labels, probs = std::move(probs), n, k](Tape& t, int self) {
                  const S g = t.grad_ref(self)[0];
                  Tensor<S> dl({n, k});
                  const S invn = g / static_cast<S>(n);
                  for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t j = 0; j < k; ++j) {
                      S v = probs[r * k + j];
                      if (j == labels[r]) v -= S(1);
                      dl[r * k + j] = v * invn;
                    }
                  }
                  t.add_grad(pl, std::move(dl));
                });
  }

  // ---- batch normalization ----------------------------------------------------

  Var<S> batchnorm(Var<S> x, Var<S> gamma, Var<S> beta, BnState<S>& state,
                   bool training, S momentum = S(0.1), S eps = S(1e-5)) {
    const Tensor<S>& xv = value(x);
    if (xv.rank() != 4) throw ShapeError("batchnorm: expected (batch, channels, h, w)");
    const std::size_t nb = xv.shape()[0];
    const std::size_t c = xv.shape()[1];
    const std::size_t hw = xv.shape()[2] * xv.shape()[3];
    if (value(gamma).size() != c || value(beta).size() != c) {
      throw ShapeError("batchnorm: gamma/beta extent mismatch");
    }

    Tensor<S> mean({c});
    Tensor<S> inv_sigma({c});
    if (training) {
      const S invm = S(1) / static_cast<S>(nb * hw);
      parallel_for(c, [&](std::size_t cb, std::size_t ce) {
        for (std::size_t ch = cb; ch < ce; ++ch) {
          S acc = S(0);
          for (std::size_t b = 0; b < nb; ++b) {
            const S* row = xv.data() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
          }
          const S mu = acc * invm;
          S vacc = S(0);
          for (std::size_t b = 0; b < nb; ++b) {
            const S* row = xv.data() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              const S d = row[i] - mu;
              vacc += d * d;
            }
          }
          const S var = vacc * invm;
          mean[ch] = mu;
          inv_sigma[ch] = S(1) / std::sqrt(var + eps);
          state.running_mean[ch] = (S(1) - momentum) * state.running_mean[ch] + momentum * mu;
          state.running_var[ch] = (S(1) - momentum) * state.running_var[ch] + momentum * var;
        }
      });
    } else {
      for (std::size_t ch = 0; ch < c; ++ch) {
        mean[ch] = state.running_mean[ch];
        inv_sigma[ch] = S(1) / std::sqrt(state.running_var[ch] + eps);
      }
    }

    Tensor<S> a({c});
    Tensor<S> b({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
      a[ch] = value(gamma)[ch] * inv_sigma[ch];
      b[ch] = value(beta)[ch] - value(gamma)[ch] * mean[ch] * inv_sigma[ch];
    }
    Tensor<S> out(xv.shape());
    kernels::scale_shift(xv.data(), a.data(), b.data(), out.data(), nb * c, c, hw);

    return push(std::move(out), {x.id, gamma.id, beta.id},
                [px = x.id, pg = gamma.id, pb = beta.id, mean = std::move(mean),
                 inv_sigma = std::move(inv_sigma), training, nb, c, hw](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  const Tensor<S>& xval = t.entries_[px].value;
                  const Tensor<S>& gam = t.entries_[pg].value;
                  const std::size_t m = nb * hw;

                  Tensor<S> sum_g({c});
                  Tensor<S> sum_gx({c});  // sum of g * xhat
                  parallel_for(c, [&](std::size_t cb, std::size_t ce) {
                    for (std::size_t ch = cb; ch < ce; ++ch) {
                      S s1 = S(0), s2 = S(0);
                      for (std::size_t bi = 0; bi < nb; ++bi) {
                        const S* gr = g.data() + (bi * c + ch) * hw;
                        const S* xr = xval.data() + (bi * c + ch) * hw;
                        for (std::size_t i = 0; i < hw; ++i) {
                          s1 += gr[i];
                          s2 += gr[i] * (xr[i] - mean[ch]) * inv_sigma[ch];
                        }
                      }
                      sum_g[ch] = s1;
                      sum_gx[ch] = s2;
                    }
                  });

                  if (t.needs(px)) {
                    Tensor<S> dx(xval.shape());
                    if (training) {
                      parallel_for(nb * c, [&](std::size_t rb, std::size_t re) {
                        for (std::size_t r = rb; r < re; ++r) {
                          const std::size_t ch = r % c;
                          const S k1 = gam[ch] * inv_sigma[ch];
                          const S mg = sum_g[ch] / static_cast<S>(m);
                          const S mgx = sum_gx[ch] / static_cast<S>(m);
                          const S* gr = g.data() + r * hw;
                          const S* xr = xval.data() + r * hw;
                          S* dr = dx.data() + r * hw;
                          for (std::size_t i = 0; i < hw; ++i) {
                            const S xhat = (xr[i] - mean[ch]) * inv_sigma[ch];
                            dr[i] = k1 * (gr[i] - mg - xhat * mgx);
                          }
                        }
                      });
                    } else {
                      parallel_for(nb * c, [&](std::size_t rb, std::size_t re) {
                        for (std::size_t r = rb; r < re; ++r) {
                          const std::size_t ch = r % c;
                          const S k1 = gam[ch] * inv_sigma[ch];
                          const S* gr = g.data() + r * hw;
                          S* dr = dx.data() + r * hw;
                          for (std::size_t i = 0; i < hw; ++i) dr[i] = k1 * gr[i];
                        }
                      });
                    }
                    t.add_grad(px, std::move(dx));
                  }
                  if (t.needs(pg)) t.add_grad(pg, Tensor<S>(sum_gx));
                  if (t.needs(pb)) t.add_grad(pb, Tensor<S>(sum_g));
                });
  }

  // ---- temporal ops (rank-5 (N,T,C,H,W) tensors) -------------------------------

  Var<S> temporal_shift(Var<S> x, double shift_fraction) {
    const Tensor<S>& xv = value(x);
    if (xv.rank() != 5) throw ShapeError("temporal_shift: expected (N,T,C,H,W)");
    const std::size_t c = xv.shape()[2];
    const std::size_t fold = static_cast<std::size_t>(
        static_cast<double>(c) * shift_fraction);
    Tensor<S> out = shifted(xv, fold, /*forward=*/true);
    return push(std::move(out), {x.id},
                [px = x.id, fold](Tape& t, int self) {
                  t.add_grad(px, shifted(t.grad_ref(self), fold, /*forward=*/false));
                });
  }

  // out[:,t] = a[:,t+1] - b[:,t] for t < T-1; the last slice is exactly zero.
  Var<S> temporal_forward_diff(Var<S> a, Var<S> b) {
    const Tensor<S>& av = value(a);
    const Tensor<S>& bv = value(b);
    if (av.shape() != bv.shape() || av.rank() < 2) {
      throw ShapeError("temporal_forward_diff: operands must share a (N,T,...) shape");
    }
    const std::size_t n = av.shape()[0];
    const std::size_t tt = av.shape()[1];
    const std::size_t rest = av.size() / (n * tt);
    Tensor<S> out(av.shape());
    for (std::size_t ni = 0; ni < n; ++ni) {
      for (std::size_t ti = 0; ti + 1 < tt; ++ti) {
        const S* ap = av.data() + (ni * tt + ti + 1) * rest;
        const S* bp = bv.data() + (ni * tt + ti) * rest;
        S* op = out.data() + (ni * tt + ti) * rest;
        for (std::size_t i = 0; i < rest; ++i) op[i] = ap[i] - bp[i];
      }
    }
    return push(std::move(out), {a.id, b.id},
                [pa = a.id, pb = b.id, n, tt, rest](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  if (t.needs(pa)) {
                    Tensor<S> da(g.shape());
                    for (std::size_t ni = 0; ni < n; ++ni) {
                      for (std::size_t ti = 0; ti + 1 < tt; ++ti) {
                        const S* gp = g.data() + (ni * tt + ti) * rest;
                        S* dp = da.data() + (ni * tt + ti + 1) * rest;
                        for (std::size_t i = 0; i < rest; ++i) dp[i] = gp[i];
                      }
                    }
                    t.add_grad(pa, std::move(da));
                  }
                  if (t.needs(pb)) {
                    Tensor<S> db(g.shape());
                    for (std::size_t ni = 0; ni < n; ++ni) {
                      for (std::size_t ti = 0; ti + 1 < tt; ++ti) {
                        const S* gp = g.data() + (ni * tt + ti) * rest;
                        S* dp = db.data() + (ni * tt + ti) * rest;
                        for (std::size_t i = 0; i < rest; ++i) dp[i] = -gp[i];
                      }
                    }
                    t.add_grad(pb, std::move(db));
                  }
                });
  }

  Var<S> avg_pool2x2(Var<S> x) {
    const Tensor<S>& xv = value(x);
    if (xv.rank() != 4) throw ShapeError("avg_pool2x2: expected (batch, channels, h, w)");
    const std::size_t nb = xv.shape()[0] * xv.shape()[1];
    const std::size_t h = xv.shape()[2];
    const std::size_t w = xv.shape()[3];
    if (h % 2 || w % 2) throw ShapeError("avg_pool2x2: spatial extents must be even");
    Tensor<S> out({xv.shape()[0], xv.shape()[1], h / 2, w / 2});
    for (std::size_t p = 0; p < nb; ++p) {
      const S* xc = xv.data() + p * h * w;
      S* yc = out.data() + p * (h / 2) * (w / 2);
      for (std::size_t oy = 0; oy < h / 2; ++oy) {
        for (std::size_t ox = 0; ox < w / 2; ++ox) {
          const S* r0 = xc + (2 * oy) * w + 2 * ox;
          const S* r1 = r0 + w;
          yc[oy * (w / 2) + ox] = (r0[0] + r0[1] + r1[0] + r1[1]) * S(0.25);
        }
      }
    }
    return push(std::move(out), {x.id},
                [px = x.id, nb, h, w](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dx(t.entries_[px].value.shape());
                  for (std::size_t p = 0; p < nb; ++p) {
                    const S* gc = g.data() + p * (h / 2) * (w / 2);
                    S* dc = dx.data() + p * h * w;
                    for (std::size_t oy = 0; oy < h / 2; ++oy) {
                      for (std::size_t ox = 0; ox < w / 2; ++ox) {
                        const S gv = gc[oy * (w / 2) + ox] * S(0.25);
                        dc[(2 * oy) * w + 2 * ox] = gv;
                        dc[(2 * oy) * w + 2 * ox + 1] = gv;
                        dc[(2 * oy + 1) * w + 2 * ox] = gv;
                        dc[(2 * oy + 1) * w + 2 * ox + 1] = gv;
                      }
                    }
                  }
                  t.add_grad(px, std::move(dx));
                });
  }

  // Mean over the segment axis of (N, T, classes). Addends are accumulated in
  // sorted value order, which makes the result exactly invariant under any
  // permutation of the T axis.
  Var<S> segment_consensus(Var<S> logits) {
    const Tensor<S>& lv = value(logits);
    if (lv.rank() != 3) throw ShapeError("segment_consensus: expected (N, T, classes)");
    const std::size_t n = lv.shape()[0];
    const std::size_t tt = lv.shape()[1];
    const std::size_t k = lv.shape()[2];
    Tensor<S> out({n, k});
    std::vector<S> buf(tt);
    for (std::size_t ni = 0; ni < n; ++ni) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t ti = 0; ti < tt; ++ti) buf[ti] = lv[(ni * tt + ti) * k + kk];
        std::sort(buf.begin(), buf.end());
        S acc = S(0);
        for (std::size_t ti = 0; ti < tt; ++ti) acc += buf[ti];
        out[ni * k + kk] = acc / static_cast<S>(tt);
      }
    }
    return push(std::move(out), {logits.id},
                [pl = logits.id, n, tt, k](Tape& t, int self) {
                  const Tensor<S>& g = t.grad_ref(self);
                  Tensor<S> dl({n, tt, k});
                  const S inv = S(1) / static_cast<S>(tt);
                  for (std::size_t ni = 0; ni < n; ++ni) {
                    for (std::size_t ti = 0; ti < tt; ++ti) {
                      for (std::size_t kk = 0; kk < k; ++kk) {
                        dl[(ni * tt + ti) * k + kk] = g[ni * k + kk] * inv;
                      }
                    }
                  }
                  t.add_grad(pl, std::move(dl));
                });
  }

  // ---- backward ------------------------------------------------------------

  void backward(Var<S> loss) {
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
    add_grad(loss.id, Tensor<S>::scalar(S(1)));
    for (int id = loss.id; id >= 0; --id) {
      Entry& e = entries_[static_cast<std::size_t>(id)];
      if (!e.needs || grads_[static_cast<std::size_t>(id)].size() == 0) continue;
      if (e.vjp) e.vjp(*this, id);
    }
    for (auto& [p, id] : param_nodes_) {
      const Tensor<S>& g = grads_[static_cast<std::size_t>(id)];
      if (g.size() == 0) continue;
      for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
  }

  bool needs(int id) const { return entries_[static_cast<std::size_t>(id)].needs; }

  std::size_t node_count() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor<S> value;
    std::vector<int> parents;
    std::function<void(Tape&, int)> vjp;
    bool needs = false;
    Parameter<S>* bound = nullptr;
  };

  Var<S> push(Tensor<S> value, std::vector<int> parents,
              std::function<void(Tape&, int)> vjp, bool leaf_needs = false) {
    Entry e;
    e.value = std::move(value);
    e.parents = std::move(parents);
    e.vjp = std::move(vjp);
    e.needs = leaf_needs;
    for (int p : e.parents) {
      if (entries_[static_cast<std::size_t>(p)].needs) e.needs = true;
    }
    entries_.push_back(std::move(e));
    grads_.emplace_back();
    return Var<S>{static_cast<int>(entries_.size()) - 1};
  }

  const Tensor<S>& grad_ref(int id) const { return grads_[static_cast<std::size_t>(id)]; }

  void add_grad(int id, Tensor<S>&& g) {
    Tensor<S>& dst = grads_[static_cast<std::size_t>(id)];
    if (dst.size() == 0) {
      dst = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  static kernels::ConvGeom conv_geometry(const Shape& xs, const Shape& ws,
                                         const ConvOpts& opts) {
    if (opts.rank < 1 || opts.rank > 3) throw ShapeError("convolve: rank must be 1..3");
    const std::size_t r = static_cast<std::size_t>(opts.rank);
    if (xs.size() != r + 2) {
      throw ShapeError("convolve: input must be (batch, channels, spatial...)");
    }
    if (ws.size() != r + 2) {
      throw ShapeError("convolve: kernel must be (out, in/groups, k...)");
    }
    kernels::ConvGeom g;
    g.rank = opts.rank;
    g.batch = xs[0];
    g.cin = xs[1];
    g.cout = ws[0];
    g.groups = opts.groups;
    if (g.groups < 1 || g.cin % g.groups || g.cout % g.groups) {
      throw ShapeError("convolve: channels not divisible by groups");
    }
    if (ws[1] != g.cin / g.groups) {
      throw ShapeError("convolve: kernel input channels " + std::to_string(ws[1]) +
                       " != channels/groups " + std::to_string(g.cin / g.groups));
    }
    for (std::size_t d = 0; d < r; ++d) {
      g.in[d] = xs[2 + d];
      g.kernel[d] = ws[2 + d];
      g.stride[d] = opts.stride[d];
      g.pad[d] = opts.pad[d];
      if (g.stride[d] < 1) throw ShapeError("convolve: stride must be >= 1");
      const std::size_t padded = g.in[d] + 2 * g.pad[d];
      if (g.kernel[d] > padded) {
        throw ShapeError("convolve: kernel larger than padded input");
      }
      g.out[d] = (padded - g.kernel[d]) / g.stride[d] + 1;
    }
    return g;
  }

  static Tensor<S> pad2d(const Tensor<S>& x, const kernels::ConvGeom& g) {
    const std::size_t planes = g.batch * (x.shape()[1]);
    const std::size_t h = x.shape()[2];
    const std::size_t w = x.shape()[3];
    const std::size_t ph = h + 2 * g.pad[0];
    const std::size_t pw = w + 2 * g.pad[1];
    Tensor<S> out({x.shape()[0], x.shape()[1], ph, pw});
    if (g.pad[0] == 0 && g.pad[1] == 0) {
      std::copy(x.data(), x.data() + x.size(), out.data());
      return out;
    }
    for (std::size_t p = 0; p < planes; ++p) {
      const S* src = x.data() + p * h * w;
      S* dst = out.data() + p * ph * pw + g.pad[0] * pw + g.pad[1];
      for (std::size_t row = 0; row < h; ++row) {
        std::copy(src + row * w, src + (row + 1) * w, dst + row * pw);
      }
    }
    return out;
  }

  // w (cout, cin/g, ky, kx) -> wt (cin, cout/g, ky, kx) with both spatial
  // axes reversed, per group.
  static Tensor<S> flip_transpose_weights(const Tensor<S>& w, const kernels::ConvGeom& g) {
    const std::size_t cin_g = g.cin / g.groups;
    const std::size_t cout_g = g.cout / g.groups;
    const std::size_t kh = g.kernel[0];
    const std::size_t kw = g.kernel[1];
    Tensor<S> wt({g.cin, cout_g, kh, kw});
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      for (std::size_t co = 0; co < cout_g; ++co) {
        for (std::size_t ci = 0; ci < cin_g; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              wt[(((grp * cin_g + ci) * cout_g + co) * kh + (kh - 1 - ky)) * kw +
                 (kw - 1 - kx)] =
                  w[(((grp * cout_g + co) * cin_g + ci) * kh + ky) * kw + kx];
            }
          }
        }
      }
    }
    return wt;
  }

  static Tensor<S> shifted(const Tensor<S>& x, std::size_t fold, bool forward) {
    const std::size_t n = x.shape()[0];
    const std::size_t tt = x.shape()[1];
    const std::size_t c = x.shape()[2];
    const std::size_t sp = x.shape()[3] * x.shape()[4];
    Tensor<S> out(x.shape());
    auto src_t = [&](std::size_t t, std::size_t ch) -> std::ptrdiff_t {
      // first fold channels move +1 in t (take from t-1), next fold move -1
      std::ptrdiff_t d = 0;
      if (ch < fold) d = 1;
      else if (ch < 2 * fold) d = -1;
      if (!forward) d = -d;
      return static_cast<std::ptrdiff_t>(t) - d;
    };
    for (std::size_t ni = 0; ni < n; ++ni) {
      for (std::size_t ti = 0; ti < tt; ++ti) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          S* dst = out.data() + ((ni * tt + ti) * c + ch) * sp;
          const std::ptrdiff_t st = src_t(ti, ch);
          if (st < 0 || st >= static_cast<std::ptrdiff_t>(tt)) {
            std::fill(dst, dst + sp, S(0));
          } else {
            const S* src = x.data() + ((ni * tt + static_cast<std::size_t>(st)) * c + ch) * sp;
            std::copy(src, src + sp, dst);
          }
        }
      }
    }
    return out;
  }

  std::vector<Entry> entries_;
  std::vector<Tensor<S>> grads_;
  std::map<Parameter<S>*, int> param_nodes_;
};

// ============================================================================
// Finite-difference gradient verification
// ============================================================================

template <typename S>
using GradCheckFn = std::function<Var<S>(Tape<S>&, const std::vector<Var<S>>&)>;

// Central differences (f(x+eps) - f(x-eps)) / (2 eps) per element against the
// analytic gradient; returns the max relative error with an absolute floor of
// 1e-8 in the denominator.
inline double grad_check(const GradCheckFn<double>& fn, std::vector<Tensor<double>> inputs,
                         double eps = 1e-5) {
  auto eval = [&](const std::vector<Tensor<double>>& ins) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(ins.size());
    for (const auto& t : ins) vars.push_back(tape.input(Tensor<double>(t)));
    Var<double> loss = fn(tape, vars);
    const double v = tape.value(loss)[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss value");
    return v;
  };

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(Tensor<double>(t)));
    Var<double> loss = fn(tape, vars);
    if (!std::isfinite(tape.value(loss)[0])) {
      throw NumericError("grad_check: non-finite loss value");
    }
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i][j];
      inputs[i][j] = orig + eps;
      const double fp = eval(inputs);
      inputs[i][j] = orig - eps;
      const double fm = eval(inputs);
      inputs[i][j] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[i][j];
      if (!std::isfinite(fd) || !std::isfinite(an)) {
        throw NumericError("grad_check: non-finite gradient");
      }
      const double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace actionkit
