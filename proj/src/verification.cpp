#include "actionkit/verification.hpp"

#include "actionkit/autodiff.hpp"
#include "actionkit/excitation.hpp"
#include "actionkit/rng.hpp"

namespace actionkit {

namespace {

using D = double;
using VarD = Var<D>;
using TapeD = Tape<D>;

Tensor<D> randn(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<D> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

// sum(y * R) with a fixed random weighting; breaks symmetries a plain sum
// would hide.
VarD weighted_sum(TapeD& t, VarD y, std::uint64_t seed) {
  Rng rng(seed);
  const Shape s = t.value(y).shape();
  return t.sum_all(t.mul(y, t.constant(randn(s, rng))));
}

struct PathShapes {
  std::size_t n, t, c, h, w;
};

const PathShapes kPathShapes[] = {
    {1, 2, 4, 3, 3}, {2, 3, 2, 2, 2}, {1, 4, 6, 4, 3}, {1, 1, 4, 3, 3}, {2, 2, 17, 2, 2},
};

void add(std::vector<GradCheckItem>& out, const std::string& name,
         const GradCheckFn<D>& fn, std::vector<Tensor<D>> inputs) {
  out.push_back({name, grad_check(fn, std::move(inputs))});
}

void conv_items(std::vector<GradCheckItem>& out, std::uint64_t seed) {
  Rng rng(seed);
  struct Cfg {
    const char* name;
    Shape x, w;
    ConvOpts opts;
    bool bias;
  };
  std::vector<Cfg> cfgs;
  {
    ConvOpts o;
    o.rank = 1;
    o.pad = {1, 0, 0};
    cfgs.push_back({"convolve_1d", {2, 3, 7}, {4, 3, 3}, o, true});
  }
  {
    ConvOpts o;
    o.rank = 1;
    o.pad = {1, 0, 0};
    o.groups = 2;
    cfgs.push_back({"convolve_1d_grouped", {1, 4, 6}, {4, 2, 3}, o, true});
  }
  {
    ConvOpts o;
    o.pad = {1, 1, 0};
    cfgs.push_back({"convolve_2d", {2, 3, 5, 4}, {4, 3, 3, 3}, o, true});
  }
  {
    ConvOpts o;
    o.pad = {1, 1, 0};
    o.groups = 4;
    cfgs.push_back({"convolve_2d_depthwise", {1, 4, 5, 5}, {4, 1, 3, 3}, o, true});
  }
  {
    ConvOpts o;
    o.pad = {1, 1, 0};
    o.stride = {2, 2, 1};
    cfgs.push_back({"convolve_2d_stride2", {1, 3, 7, 7}, {2, 3, 3, 3}, o, false});
  }
  {
    ConvOpts o;
    cfgs.push_back({"convolve_2d_1x1", {2, 5, 3, 3}, {3, 5, 1, 1}, o, true});
  }
  {
    ConvOpts o;
    o.rank = 3;
    o.pad = {1, 1, 1};
    cfgs.push_back({"convolve_3d", {1, 2, 3, 4, 4}, {2, 2, 3, 3, 3}, o, true});
  }
  {
    ConvOpts o;
    o.rank = 3;
    o.pad = {1, 1, 1};
    cfgs.push_back({"convolve_3d_single_channel", {2, 1, 3, 5, 5}, {1, 1, 3, 3, 3}, o, true});
  }

  for (const Cfg& cfg : cfgs) {
    std::vector<Tensor<D>> inputs{randn(cfg.x, rng), randn(cfg.w, rng, 0.5)};
    if (cfg.bias) inputs.push_back(randn({cfg.w[0]}, rng, 0.2));
    const std::uint64_t ws = rng.next_u64();
    const ConvOpts opts = cfg.opts;
    const bool bias = cfg.bias;
    add(out, cfg.name,
        [opts, bias, ws](TapeD& t, const std::vector<VarD>& v) {
          std::optional<VarD> b;
          if (bias) b = v[2];
          return weighted_sum(t, t.convolve(v[0], v[1], b, opts), ws);
        },
        std::move(inputs));
  }
}

void elementwise_items(std::vector<GradCheckItem>& out, std::uint64_t seed) {
  Rng rng(seed);
  const Shape shapes[] = {{3}, {2, 3}, {2, 3, 4}, {1, 2, 3, 4}, {2, 2, 2, 2, 2}};
  int i = 0;
  for (const Shape& s : shapes) {
    const std::uint64_t ws = rng.next_u64();
    add(out, "sigmoid_" + std::to_string(i++),
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.sigmoid(v[0]), ws);
        },
        {randn(s, rng)});
  }

  struct MeanCfg {
    Shape s;
    std::size_t axis;
    bool keep;
  };
  const MeanCfg means[] = {{{4}, 0, false},
                           {{3, 4}, 1, true},
                           {{2, 3, 4}, 0, false},
                           {{2, 3, 4, 5}, 2, true},
                           {{2, 2, 2, 2, 2}, 4, false}};
  i = 0;
  for (const MeanCfg& m : means) {
    const std::uint64_t ws = rng.next_u64();
    add(out, "mean_axis_" + std::to_string(i++),
        [m, ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.mean_axis(v[0], m.axis, m.keep), ws);
        },
        {randn(m.s, rng)});
  }

  struct GateCfg {
    Shape x, m;
  };
  const GateCfg gates[] = {{{2, 3, 4, 2, 2}, {2, 3, 1, 2, 2}},
                           {{2, 3, 4, 2, 2}, {2, 3, 4, 1, 1}},
                           {{2, 3, 4}, {2, 3, 4}},
                           {{4, 4}, {1, 4}},
                           {{2, 5, 3}, {2, 1, 3}}};
  i = 0;
  for (const GateCfg& gcfg : gates) {
    const std::uint64_t ws = rng.next_u64();
    add(out, "broadcast_mul_add_" + std::to_string(i++),
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.broadcast_mul_add(v[0], v[1]), ws);
        },
        {randn(gcfg.x, rng), randn(gcfg.m, rng, 0.4)});
  }

  {
    const std::uint64_t ws = rng.next_u64();
    add(out, "linear",
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.linear(v[0], v[1], v[2]), ws);
        },
        {randn({3, 5}, rng), randn({4, 5}, rng, 0.5), randn({4}, rng, 0.2)});
  }
  {
    add(out, "softmax_xent",
        [](TapeD& t, const std::vector<VarD>& v) {
          return t.softmax_xent(v[0], {1, 0, 2});
        },
        {randn({3, 4}, rng)});
  }
  {
    const std::uint64_t ws = rng.next_u64();
    add(out, "avg_pool2x2",
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.avg_pool2x2(v[0]), ws);
        },
        {randn({2, 3, 4, 4}, rng)});
  }
  {
    const std::uint64_t ws = rng.next_u64();
    add(out, "temporal_shift",
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.temporal_shift(v[0], 0.125), ws);
        },
        {randn({2, 3, 8, 2, 2}, rng)});
  }
  {
    const std::uint64_t ws = rng.next_u64();
    add(out, "segment_consensus",
        [ws](TapeD& t, const std::vector<VarD>& v) {
          return weighted_sum(t, t.segment_consensus(v[0]), ws);
        },
        {randn({2, 5, 3}, rng)});
  }
  {
    // train-mode batchnorm; state is rebuilt per evaluation
    const std::uint64_t ws = rng.next_u64();
    add(out, "batchnorm",
        [ws](TapeD& t, const std::vector<VarD>& v) {
          BnState<D> state(3);
          return weighted_sum(t, t.batchnorm(v[0], v[1], v[2], state, true), ws);
        },
        {randn({2, 3, 3, 3}, rng), randn({3}, rng, 0.5), randn({3}, rng, 0.5)});
  }
}

// Paths are checked with every weight random (including the expand kernels,
// which train from zero) so all gradient routes are live.
void path_items(std::vector<GradCheckItem>& out, std::uint64_t seed) {
  Rng rng(seed);
  int idx = 0;
  for (const PathShapes& ps : kPathShapes) {
    const std::size_t red = reduced_channels(ps.c);
    const Shape x{ps.n, ps.t, ps.c, ps.h, ps.w};
    const std::uint64_t ws = rng.next_u64();
    const std::string suffix = "_" + std::to_string(idx);

    add(out, "ste" + suffix,
        [ws](TapeD& t, const std::vector<VarD>& v) {
          SteVars<D> w{v[1], v[2]};
          return weighted_sum(t, ste_forward(t, v[0], w), ws);
        },
        {randn(x, rng), randn({1, 1, 3, 3, 3}, rng, 0.4), randn({1}, rng, 0.2)});

    add(out, "ce" + suffix,
        [ws](TapeD& t, const std::vector<VarD>& v) {
          CeVars<D> w{v[1], v[2], v[3], v[4], v[5], v[6]};
          return weighted_sum(t, ce_forward(t, v[0], w), ws);
        },
        {randn(x, rng), randn({red, ps.c, 1, 1}, rng, 0.4), randn({red}, rng, 0.2),
         randn({red, red, 3}, rng, 0.4), randn({red}, rng, 0.2),
         randn({ps.c, red, 1, 1}, rng, 0.4), randn({ps.c}, rng, 0.2)});

    add(out, "me" + suffix,
        [ws](TapeD& t, const std::vector<VarD>& v) {
          MeVars<D> w{v[1], v[2], v[3], v[4], v[5], v[6]};
          return weighted_sum(t, me_forward(t, v[0], w), ws);
        },
        {randn(x, rng), randn({red, ps.c, 1, 1}, rng, 0.4), randn({red}, rng, 0.2),
         randn({red, 1, 3, 3}, rng, 0.4), randn({red}, rng, 0.2),
         randn({ps.c, red, 1, 1}, rng, 0.4), randn({ps.c}, rng, 0.2)});

    add(out, "action" + suffix,
        [ws](TapeD& t, const std::vector<VarD>& v) {
          ActionVars<D> w{{v[1], v[2]},
                          {v[3], v[4], v[5], v[6], v[7], v[8]},
                          {v[9], v[10], v[11], v[12], v[13], v[14]}};
          return weighted_sum(t, action_forward(t, v[0], w), ws);
        },
        {randn(x, rng), randn({1, 1, 3, 3, 3}, rng, 0.4), randn({1}, rng, 0.2),
         randn({red, ps.c, 1, 1}, rng, 0.4), randn({red}, rng, 0.2),
         randn({red, red, 3}, rng, 0.4), randn({red}, rng, 0.2),
         randn({ps.c, red, 1, 1}, rng, 0.4), randn({ps.c}, rng, 0.2),
         randn({red, ps.c, 1, 1}, rng, 0.4), randn({red}, rng, 0.2),
         randn({red, 1, 3, 3}, rng, 0.4), randn({red}, rng, 0.2),
         randn({ps.c, red, 1, 1}, rng, 0.4), randn({ps.c}, rng, 0.2)});
    ++idx;
  }
}

}  // namespace

std::vector<GradCheckItem> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckItem> items;
  conv_items(items, Rng::mix(seed, 1));
  elementwise_items(items, Rng::mix(seed, 2));
  path_items(items, Rng::mix(seed, 3));
  return items;
}

}  // namespace actionkit
