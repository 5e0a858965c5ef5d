#include "doctest.h"

#include <cmath>

#include "actionkit/excitation.hpp"
#include "test_util.hpp"

using namespace actionkit;

namespace {

struct PathInputs {
  Tensor<double> x;
  testutil::SteRef ste;
  testutil::CeRef ce;
  testutil::MeRef me;
};

PathInputs random_inputs(std::size_t n, std::size_t t, std::size_t c, std::size_t h,
                         std::size_t w, Rng& rng) {
  PathInputs in;
  const std::size_t red = reduced_channels(c);
  in.x = testutil::randn<double>({n, t, c, h, w}, rng);
  in.ste = {testutil::randn<double>({1, 1, 3, 3, 3}, rng, 0.5),
            testutil::randn<double>({1}, rng, 0.2)};
  in.ce = {testutil::randn<double>({red, c, 1, 1}, rng, 0.5),
           testutil::randn<double>({red}, rng, 0.2),
           testutil::randn<double>({red, red, 3}, rng, 0.5),
           testutil::randn<double>({red}, rng, 0.2),
           testutil::randn<double>({c, red, 1, 1}, rng, 0.5),
           testutil::randn<double>({c}, rng, 0.2)};
  in.me = {testutil::randn<double>({red, c, 1, 1}, rng, 0.5),
           testutil::randn<double>({red}, rng, 0.2),
           testutil::randn<double>({red, 1, 3, 3}, rng, 0.5),
           testutil::randn<double>({red}, rng, 0.2),
           testutil::randn<double>({c, red, 1, 1}, rng, 0.5),
           testutil::randn<double>({c}, rng, 0.2)};
  return in;
}

Tensor<double> run_ste(const PathInputs& in) {
  Tape<double> t;
  SteVars<double> w{t.input(Tensor<double>(in.ste.kernel)),
                    t.input(Tensor<double>(in.ste.bias))};
  return t.value(ste_forward(t, t.constant(Tensor<double>(in.x)), w));
}

Tensor<double> run_ce(const PathInputs& in) {
  Tape<double> t;
  CeVars<double> w{t.input(Tensor<double>(in.ce.k1)), t.input(Tensor<double>(in.ce.b1)),
                   t.input(Tensor<double>(in.ce.k2)), t.input(Tensor<double>(in.ce.b2)),
                   t.input(Tensor<double>(in.ce.k3)), t.input(Tensor<double>(in.ce.b3))};
  return t.value(ce_forward(t, t.constant(Tensor<double>(in.x)), w));
}

Tensor<double> run_me(const PathInputs& in) {
  Tape<double> t;
  MeVars<double> w{t.input(Tensor<double>(in.me.k1)), t.input(Tensor<double>(in.me.b1)),
                   t.input(Tensor<double>(in.me.kd)), t.input(Tensor<double>(in.me.bd)),
                   t.input(Tensor<double>(in.me.k3)), t.input(Tensor<double>(in.me.b3))};
  return t.value(me_forward(t, t.constant(Tensor<double>(in.x)), w));
}

Tensor<double> run_action(const PathInputs& in) {
  Tape<double> t;
  ActionVars<double> w{
      {t.input(Tensor<double>(in.ste.kernel)), t.input(Tensor<double>(in.ste.bias))},
      {t.input(Tensor<double>(in.ce.k1)), t.input(Tensor<double>(in.ce.b1)),
       t.input(Tensor<double>(in.ce.k2)), t.input(Tensor<double>(in.ce.b2)),
       t.input(Tensor<double>(in.ce.k3)), t.input(Tensor<double>(in.ce.b3))},
      {t.input(Tensor<double>(in.me.k1)), t.input(Tensor<double>(in.me.b1)),
       t.input(Tensor<double>(in.me.kd)), t.input(Tensor<double>(in.me.bd)),
       t.input(Tensor<double>(in.me.k3)), t.input(Tensor<double>(in.me.b3))}};
  return t.value(action_forward(t, t.constant(Tensor<double>(in.x)), w));
}

Tensor<double> reverse_segments(const Tensor<double>& x) {
  const Shape& s = x.shape();
  Tensor<double> out(s);
  const std::size_t rest = x.size() / (s[0] * s[1]);
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t t = 0; t < s[1]; ++t) {
      const double* src = x.data() + (n * s[1] + (s[1] - 1 - t)) * rest;
      std::copy(src, src + rest, out.data() + (n * s[1] + t) * rest);
    }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Straight-line oracle agreement (tiny shapes, double precision)
// ---------------------------------------------------------------------------

TEST_CASE("excitation paths match the straight-line loop oracles") {
  Rng rng(101);
  struct Cfg {
    std::size_t n, t, c, h, w;
  };
  // includes the minimal channel case (reduce-ratio floor at 1) and T = 1
  const Cfg cfgs[] = {{1, 2, 2, 1, 1}, {1, 3, 2, 2, 2}, {2, 4, 6, 3, 3},
                      {1, 1, 3, 2, 2}, {1, 2, 16, 2, 2}, {2, 2, 17, 3, 2}};
  for (const Cfg& cfg : cfgs) {
    CAPTURE(cfg.n);
    CAPTURE(cfg.t);
    CAPTURE(cfg.c);
    PathInputs in = random_inputs(cfg.n, cfg.t, cfg.c, cfg.h, cfg.w, rng);
    CHECK(testutil::max_rel_err(run_ste(in), testutil::ref_ste(in.x, in.ste), 1e-9) < 1e-10);
    CHECK(testutil::max_rel_err(run_ce(in), testutil::ref_ce(in.x, in.ce), 1e-9) < 1e-10);
    CHECK(testutil::max_rel_err(run_me(in), testutil::ref_me(in.x, in.me), 1e-9) < 1e-10);
  }
}

TEST_CASE("reduce ratio floors at one channel") {
  CHECK(reduced_channels(16) == 1);
  CHECK(reduced_channels(15) == 1);
  CHECK(reduced_channels(1) == 1);
  CHECK(reduced_channels(32) == 2);
  CHECK(reduced_channels(17) == 1);
  CHECK(reduced_channels(256) == 16);
}

// ---------------------------------------------------------------------------
// Forced-mask cases
// ---------------------------------------------------------------------------

TEST_CASE("ste with zero kernel and bias scales the input by 1.5") {
  Rng rng(102);
  PathInputs in = random_inputs(1, 3, 4, 3, 3, rng);
  in.ste.kernel = Tensor<double>::zeros({1, 1, 3, 3, 3});
  in.ste.bias = Tensor<double>::zeros({1});
  Tensor<double> y = run_ste(in);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(1.5 * in.x[i]).epsilon(1e-15));
  }
}

TEST_CASE("ce with zero expand weights scales by 1.5 regardless of other weights") {
  Rng rng(103);
  PathInputs in = random_inputs(2, 3, 8, 2, 2, rng);
  in.ce.k3 = Tensor<double>::zeros(in.ce.k3.shape());
  in.ce.b3 = Tensor<double>::zeros(in.ce.b3.shape());
  Tensor<double> y = run_ce(in);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(1.5 * in.x[i]).epsilon(1e-15));
  }
}

TEST_CASE("me on a static video with an identity difference kernel scales by 1.5") {
  Rng rng(104);
  PathInputs in = random_inputs(1, 4, 4, 3, 3, rng);
  // every frame identical
  const std::size_t frame = in.x.size() / 4;
  for (std::size_t t = 1; t < 4; ++t) {
    std::copy(in.x.data(), in.x.data() + frame, in.x.data() + t * frame);
  }
  // depthwise identity delta, zero biases everywhere downstream of the diff
  in.me.kd = Tensor<double>::zeros(in.me.kd.shape());
  const std::size_t red = in.me.kd.shape()[0];
  for (std::size_t r = 0; r < red; ++r) in.me.kd[(r * 3 + 1) * 3 + 1] = 1.0;
  in.me.bd = Tensor<double>::zeros({red});
  in.me.b1 = Tensor<double>::zeros({red});
  in.me.b3 = Tensor<double>::zeros(in.me.b3.shape());
  Tensor<double> y = run_me(in);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(1.5 * in.x[i]).epsilon(1e-13));
  }
}

TEST_CASE("me with a single segment sees only the zero pad") {
  Rng rng(105);
  PathInputs in = random_inputs(2, 1, 4, 2, 2, rng);
  in.me.b3 = Tensor<double>::zeros(in.me.b3.shape());
  Tensor<double> y = run_me(in);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(1.5 * in.x[i]).epsilon(1e-15));
  }
}

TEST_CASE("temporal_forward_diff zero-fills the last segment exactly") {
  Rng rng(106);
  Tape<double> t;
  Var<double> a = t.constant(testutil::randn<double>({2, 3, 4}, rng));
  Var<double> b = t.constant(testutil::randn<double>({2, 3, 4}, rng));
  const Tensor<double>& d = t.value(t.temporal_forward_diff(a, b));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 4; ++i) CHECK(d[(n * 3 + 2) * 4 + i] == 0.0);
  }
  // leading slices are a[t+1] - b[t]
  const Tensor<double>& av = t.value(a);
  const Tensor<double>& bv = t.value(b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ti = 0; ti < 2; ++ti)
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(d[(n * 3 + ti) * 4 + i] ==
              av[(n * 3 + ti + 1) * 4 + i] - bv[(n * 3 + ti) * 4 + i]);
      }
}

TEST_CASE("action with zero-initialized gate kernels yields 4.5x") {
  Rng rng(107);
  PathInputs in = random_inputs(1, 3, 8, 2, 2, rng);
  in.ste.kernel = Tensor<double>::zeros(in.ste.kernel.shape());
  in.ste.bias = Tensor<double>::zeros({1});
  in.ce.k3 = Tensor<double>::zeros(in.ce.k3.shape());
  in.ce.b3 = Tensor<double>::zeros(in.ce.b3.shape());
  in.me.k3 = Tensor<double>::zeros(in.me.k3.shape());
  in.me.b3 = Tensor<double>::zeros(in.me.b3.shape());
  Tensor<double> y = run_action(in);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(4.5 * in.x[i]).epsilon(1e-14));
  }
}

TEST_CASE("action equals the sum of its separately computed paths") {
  Rng rng(108);
  PathInputs in = random_inputs(2, 3, 6, 3, 3, rng);
  Tensor<double> combined = run_action(in);
  Tensor<double> a = run_ste(in);
  Tensor<double> b = run_ce(in);
  Tensor<double> c = run_me(in);
  Tensor<double> manual(a.shape());
  for (std::size_t i = 0; i < manual.size(); ++i) manual[i] = a[i] + b[i] + c[i];
  CHECK(testutil::max_rel_err(combined, manual) < 1e-12);
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

TEST_CASE("paths preserve the input shape") {
  Rng rng(109);
  struct Cfg {
    std::size_t n, t, c, h, w;
  };
  const Cfg cfgs[] = {{2, 8, 16, 14, 14}, {2, 8, 32, 8, 8}, {1, 1, 1, 1, 1}, {3, 2, 5, 4, 6}};
  for (const Cfg& cfg : cfgs) {
    PathInputs in = random_inputs(cfg.n, cfg.t, cfg.c, cfg.h, cfg.w, rng);
    const Shape want{cfg.n, cfg.t, cfg.c, cfg.h, cfg.w};
    CHECK(run_ste(in).shape() == want);
    CHECK(run_ce(in).shape() == want);
    CHECK(run_me(in).shape() == want);
    CHECK(run_action(in).shape() == want);
  }
}

TEST_CASE("per-path outputs stay within the residual bounds") {
  Rng rng(110);
  PathInputs in = random_inputs(2, 4, 8, 3, 3, rng);
  for (const Tensor<double>& y : {run_ste(in), run_ce(in), run_me(in)}) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double xv = in.x[i];
      CHECK(y[i] * xv >= 0.0);  // sign preserved
      CHECK(std::abs(y[i]) >= std::abs(xv));
      CHECK(std::abs(y[i]) <= 2.0 * std::abs(xv));
      if (std::abs(xv) > 1e-6) {
        // mask strictly inside (0,1)
        CHECK(std::abs(y[i]) > std::abs(xv));
        CHECK(std::abs(y[i]) < 2.0 * std::abs(xv));
      }
    }
  }
}

TEST_CASE("ste is equivariant to channel permutations") {
  Rng rng(111);
  PathInputs in = random_inputs(1, 3, 5, 3, 3, rng);
  Tensor<double> base = run_ste(in);

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  PathInputs permuted_in = in;
  const std::size_t hw = 9, c = 5;
  for (std::size_t nt = 0; nt < 3; ++nt)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t p = 0; p < hw; ++p) {
        permuted_in.x[(nt * c + ci) * hw + p] = in.x[(nt * c + perm[ci]) * hw + p];
      }
  Tensor<double> permuted_out = run_ste(permuted_in);
  for (std::size_t nt = 0; nt < 3; ++nt)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t p = 0; p < hw; ++p) {
        const double want = base[(nt * c + perm[ci]) * hw + p];
        const double got = permuted_out[(nt * c + ci) * hw + p];
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("batched and per-sample evaluation agree exactly") {
  Rng rng(112);
  PathInputs in = random_inputs(3, 2, 4, 2, 3, rng);
  Tensor<double> batched = run_action(in);
  const std::size_t sample = in.x.size() / 3;
  for (std::size_t n = 0; n < 3; ++n) {
    PathInputs single = in;
    single.x = Tensor<double>({1, 2, 4, 2, 3});
    std::copy(in.x.data() + n * sample, in.x.data() + (n + 1) * sample, single.x.data());
    Tensor<double> y = run_action(single);
    for (std::size_t i = 0; i < sample; ++i) {
      CHECK(y[i] == batched[n * sample + i]);
    }
  }
}

TEST_CASE("action is sensitive to segment order") {
  Rng rng(113);
  PathInputs in = random_inputs(1, 4, 6, 3, 3, rng);
  PathInputs rev = in;
  rev.x = reverse_segments(in.x);
  Tensor<double> y_rev_input = run_action(rev);
  Tensor<double> y_rev_output = reverse_segments(run_action(in));
  double max_diff = 0;
  for (std::size_t i = 0; i < y_rev_input.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(y_rev_input[i] - y_rev_output[i]));
  }
  CHECK(max_diff > 1e-6);
}

TEST_CASE("path gradients pass grad_check") {
  Rng rng(114);
  const double err = grad_check(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        ActionVars<double> w{{v[1], v[2]},
                             {v[3], v[4], v[5], v[6], v[7], v[8]},
                             {v[9], v[10], v[11], v[12], v[13], v[14]}};
        Var<double> y = action_forward(t, v[0], w);
        return t.sum_all(t.mul(y, y));
      },
      {testutil::randn<double>({1, 3, 4, 2, 2}, rng),
       testutil::randn<double>({1, 1, 3, 3, 3}, rng, 0.4),
       testutil::randn<double>({1}, rng, 0.2),
       testutil::randn<double>({1, 4, 1, 1}, rng, 0.4),
       testutil::randn<double>({1}, rng, 0.2), testutil::randn<double>({1, 1, 3}, rng, 0.4),
       testutil::randn<double>({1}, rng, 0.2),
       testutil::randn<double>({4, 1, 1, 1}, rng, 0.4),
       testutil::randn<double>({4}, rng, 0.2),
       testutil::randn<double>({1, 4, 1, 1}, rng, 0.4),
       testutil::randn<double>({1}, rng, 0.2),
       testutil::randn<double>({1, 1, 3, 3}, rng, 0.4),
       testutil::randn<double>({1}, rng, 0.2),
       testutil::randn<double>({4, 1, 1, 1}, rng, 0.4),
       testutil::randn<double>({4}, rng, 0.2)});
  CHECK(err < 1e-4);
}

// ---------------------------------------------------------------------------
// temporal shift and segment consensus
// ---------------------------------------------------------------------------

TEST_CASE("temporal shift displaces the first channel folds") {
  Rng rng(115);
  const std::size_t n = 1, tt = 3, c = 8, h = 1, w = 1;
  Tensor<float> x = testutil::randn<float>({n, tt, c, h, w}, rng);
  Tape<float> t;
  const Tensor<float>& y = t.value(t.temporal_shift(t.constant(Tensor<float>(x)), 0.125));
  // fold = 1: channel 0 shifts +1 (zero at t=0), channel 1 shifts -1 (zero at
  // t=T-1), channels 2..7 unchanged
  for (std::size_t ti = 0; ti < tt; ++ti) {
    CHECK(y[ti * c + 0] == (ti == 0 ? 0.0f : x[(ti - 1) * c + 0]));
    CHECK(y[ti * c + 1] == (ti == tt - 1 ? 0.0f : x[(ti + 1) * c + 1]));
    for (std::size_t ci = 2; ci < c; ++ci) CHECK(y[ti * c + ci] == x[ti * c + ci]);
  }
}

TEST_CASE("temporal shift with one segment zero-fills the shifted channels") {
  Rng rng(116);
  Tensor<float> x = testutil::randn<float>({1, 1, 8, 2, 2}, rng);
  Tape<float> t;
  const Tensor<float>& y = t.value(t.temporal_shift(t.constant(Tensor<float>(x)), 0.125));
  const std::size_t sp = 4;
  for (std::size_t ci = 0; ci < 8; ++ci) {
    for (std::size_t p = 0; p < sp; ++p) {
      const float v = y[ci * sp + p];
      if (ci < 2) {
        CHECK(v == 0.0f);
      } else {
        CHECK(v == x[ci * sp + p]);
      }
    }
  }
}

TEST_CASE("temporal shift never increases the l2 norm") {
  Rng rng(117);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<float> x = testutil::randn<float>({2, 3, 16, 2, 2}, rng);
    Tape<float> t;
    const Tensor<float>& y = t.value(t.temporal_shift(t.constant(Tensor<float>(x)), 0.125));
    double nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      nx += static_cast<double>(x[i]) * x[i];
      ny += static_cast<double>(y[i]) * y[i];
    }
    CHECK(ny <= nx + 1e-6);
  }
}

TEST_CASE("segment consensus") {
  SUBCASE("single segment is the identity") {
    Rng rng(118);
    Tensor<float> x = testutil::randn<float>({3, 1, 4}, rng);
    Tape<float> t;
    const Tensor<float>& y = t.value(t.segment_consensus(t.constant(Tensor<float>(x))));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("known mean") {
    Tape<float> t;
    const Tensor<float>& y = t.value(
        t.segment_consensus(t.constant(Tensor<float>({1, 2, 2}, {1, 3, 3, 1}))));
    CHECK(y[0] == 2.0f);
    CHECK(y[1] == 2.0f);
  }
  SUBCASE("exactly invariant to any permutation of the segment axis") {
    Rng rng(119);
    Tensor<float> x = testutil::randn<float>({2, 7, 3}, rng);
    Tape<float> t1;
    const Tensor<float> base =
        t1.value(t1.segment_consensus(t1.constant(Tensor<float>(x))));
    // a handful of random permutations of the T axis
    for (int rep = 0; rep < 8; ++rep) {
      std::vector<std::size_t> perm(7);
      for (std::size_t i = 0; i < 7; ++i) perm[i] = i;
      for (std::size_t i = 7; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
      }
      Tensor<float> shuffled(x.shape());
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t ti = 0; ti < 7; ++ti)
          for (std::size_t k = 0; k < 3; ++k) {
            shuffled[(n * 7 + ti) * 3 + k] = x[(n * 7 + perm[ti]) * 3 + k];
          }
      Tape<float> t2;
      const Tensor<float>& got =
          t2.value(t2.segment_consensus(t2.constant(std::move(shuffled))));
      CHECK(testutil::bit_equal(base, got));
    }
  }
}
