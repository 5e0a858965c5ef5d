// Analytic multiply-accumulate and parameter accounting for the supported
// backbones. Counting convention: conv/fc MACs plus bias adds, batch-norm at
// 2 ops per element, activations at 1 per element, pooling at 1 per input
// element; reshapes, shifts and concatenation are free. One MAC is one
// reported "FLOP" unit.

#include "actionkit/cost_model.hpp"

#include <algorithm>
#include <set>

namespace actionkit::cost {

namespace {

std::size_t reduced(u64 channels) {
  const u64 r = channels / 16;
  return r < 1 ? 1 : static_cast<std::size_t>(r);
}

LayerSpec conv(LayerKind kind, std::string name, u64 in_ch, u64 out_ch,
               std::array<u64, 3> kernel, std::array<u64, 3> out_spatial,
               u64 groups = 1, bool bias = false) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.out_spatial = out_spatial;
  l.groups = groups;
  l.bias = bias;
  return l;
}

LayerSpec bn(std::string name, u64 channels, u64 spatial) {
  LayerSpec l;
  l.kind = LayerKind::BatchNorm;
  l.name = std::move(name);
  l.bn_channels = channels;
  l.numel = channels * spatial;
  return l;
}

LayerSpec elemwise(std::string name, u64 numel) {
  LayerSpec l;
  l.kind = LayerKind::Elementwise;
  l.name = std::move(name);
  l.numel = numel;
  return l;
}

LayerSpec pool(std::string name, u64 input_numel) {
  LayerSpec l;
  l.kind = LayerKind::Pool;
  l.name = std::move(name);
  l.numel = input_numel;
  return l;
}

void layer_cost(const LayerSpec& l, u64& macs, u64& params) {
  switch (l.kind) {
    case LayerKind::Conv2d:
    case LayerKind::Conv1d:
    case LayerKind::Conv3d: {
      const u64 out_elems = l.out_ch * l.out_spatial[0] * l.out_spatial[1] * l.out_spatial[2];
      const u64 ksize = l.kernel[0] * l.kernel[1] * l.kernel[2];
      macs += out_elems * (l.in_ch / l.groups) * ksize + (l.bias ? out_elems : 0);
      params += l.out_ch * (l.in_ch / l.groups) * ksize + (l.bias ? l.out_ch : 0);
      break;
    }
    case LayerKind::Fc:
      macs += l.in_ch * l.out_ch + (l.bias ? l.out_ch : 0);
      params += l.in_ch * l.out_ch + (l.bias ? l.out_ch : 0);
      break;
    case LayerKind::BatchNorm:
      macs += 2 * l.numel;
      params += 2 * l.bn_channels;
      break;
    case LayerKind::Pool:
    case LayerKind::Elementwise:
      macs += l.numel;
      break;
    case LayerKind::Shift:
      break;
    case LayerKind::Excitation:
      for (const LayerSpec& inner : l.internals) layer_cost(inner, macs, params);
      break;
  }
}

struct Builder {
  ArchGraph graph;
  std::string stage;

  void add(LayerSpec l) {
    l.stage = stage;
    graph.layers.push_back(std::move(l));
  }

  // Insert the variant's temporal module on a site seeing (channels, s x s).
  void module_site(const std::set<std::string>& active, u64 channels, u64 s) {
    if (graph.variant == Variant::Tsn) return;
    if (!active.count(stage)) return;
    if (graph.variant == Variant::Tsm) {
      LayerSpec l;
      l.kind = LayerKind::Shift;
      l.name = "shift";
      add(std::move(l));
      return;
    }
    LayerSpec l;
    l.kind = LayerKind::Excitation;
    l.path = graph.variant;
    l.name = variant_name(graph.variant) + "_site";
    l.internals = excitation_layers(graph.variant, channels, s, s);
    add(std::move(l));
  }
};

std::set<std::string> resolve_stages(Backbone b, const std::vector<std::string>& wanted) {
  const std::vector<std::string> legal = legal_stages(b);
  if (wanted.empty()) return {legal.begin(), legal.end()};
  std::set<std::string> out;
  for (const std::string& s : wanted) {
    if (std::find(legal.begin(), legal.end(), s) == legal.end()) {
      throw ConfigError("unknown insertion stage '" + s + "' for backbone " +
                        backbone_name(b));
    }
    out.insert(s);
  }
  return out;
}

void build_resnet50(Builder& b, const std::set<std::string>& active) {
  b.stage = "conv1";
  b.add(conv(LayerKind::Conv2d, "conv1", 3, 64, {7, 7, 1}, {112, 112, 1}));
  b.add(bn("conv1.bn", 64, 112 * 112));
  b.add(elemwise("conv1.relu", 64ull * 112 * 112));
  b.add(pool("maxpool", 64ull * 112 * 112));

  struct StageCfg {
    const char* name;
    u64 planes;
    int blocks;
    u64 stride;
  };
  const StageCfg cfg[] = {
      {"res2", 64, 3, 1}, {"res3", 128, 4, 2}, {"res4", 256, 6, 2}, {"res5", 512, 3, 2}};

  u64 in_ch = 64;
  u64 spatial = 56;
  for (const StageCfg& st : cfg) {
    b.stage = st.name;
    for (int blk = 0; blk < st.blocks; ++blk) {
      const u64 stride = blk == 0 ? st.stride : 1;
      const u64 s_in = spatial;
      const u64 s_out = s_in / stride;
      const u64 out_ch = st.planes * 4;
      const std::string p = std::string(st.name) + ".b" + std::to_string(blk + 1);

      b.module_site(active, in_ch, s_in);
      b.add(conv(LayerKind::Conv2d, p + ".conv1", in_ch, st.planes, {1, 1, 1},
                 {s_in, s_in, 1}));
      b.add(bn(p + ".bn1", st.planes, s_in * s_in));
      b.add(elemwise(p + ".relu1", st.planes * s_in * s_in));
      b.add(conv(LayerKind::Conv2d, p + ".conv2", st.planes, st.planes, {3, 3, 1},
                 {s_out, s_out, 1}));
      b.add(bn(p + ".bn2", st.planes, s_out * s_out));
      b.add(elemwise(p + ".relu2", st.planes * s_out * s_out));
      b.add(conv(LayerKind::Conv2d, p + ".conv3", st.planes, out_ch, {1, 1, 1},
                 {s_out, s_out, 1}));
      b.add(bn(p + ".bn3", out_ch, s_out * s_out));
      if (in_ch != out_ch || stride != 1) {
        b.add(conv(LayerKind::Conv2d, p + ".downsample", in_ch, out_ch, {1, 1, 1},
                   {s_out, s_out, 1}));
        b.add(bn(p + ".downsample.bn", out_ch, s_out * s_out));
      }
      b.add(elemwise(p + ".relu3", out_ch * s_out * s_out));

      in_ch = out_ch;
      spatial = s_out;
    }
  }

  b.stage = "head";
  b.add(pool("gap", in_ch * spatial * spatial));
  {
    LayerSpec fc;
    fc.kind = LayerKind::Fc;
    fc.name = "fc";
    fc.in_ch = in_ch;
    fc.out_ch = static_cast<u64>(b.graph.classes);
    fc.bias = true;
    b.add(std::move(fc));
  }
}

void build_mobilenet_v2(Builder& b, const std::set<std::string>& active) {
  b.stage = "conv1";
  b.add(conv(LayerKind::Conv2d, "conv1", 3, 32, {3, 3, 1}, {112, 112, 1}));
  b.add(bn("conv1.bn", 32, 112 * 112));
  b.add(elemwise("conv1.relu6", 32ull * 112 * 112));

  struct BlockCfg {
    u64 expand;
    u64 out;
    int repeat;
    u64 stride;
    const char* stage;
  };
  const BlockCfg cfg[] = {
      {1, 16, 1, 1, "stage2"},  {6, 24, 2, 2, "stage2"},  {6, 32, 3, 2, "stage3"},
      {6, 64, 4, 2, "stage4"},  {6, 96, 3, 1, "stage4"},  {6, 160, 3, 2, "stage5"},
      {6, 320, 1, 1, "stage5"},
  };

  u64 in_ch = 32;
  u64 spatial = 112;
  int group_id = 0;
  for (const BlockCfg& blkcfg : cfg) {
    ++group_id;
    b.stage = blkcfg.stage;
    for (int r = 0; r < blkcfg.repeat; ++r) {
      const u64 stride = r == 0 ? blkcfg.stride : 1;
      const u64 s_in = spatial;
      const u64 s_out = s_in / stride;
      const u64 exp_ch = in_ch * blkcfg.expand;
      const bool residual = stride == 1 && in_ch == blkcfg.out;
      const std::string p =
          "g" + std::to_string(group_id) + ".b" + std::to_string(r + 1);

      if (residual) b.module_site(active, in_ch, s_in);
      if (blkcfg.expand != 1) {
        b.add(conv(LayerKind::Conv2d, p + ".expand", in_ch, exp_ch, {1, 1, 1},
                   {s_in, s_in, 1}));
        b.add(bn(p + ".expand.bn", exp_ch, s_in * s_in));
        b.add(elemwise(p + ".expand.relu6", exp_ch * s_in * s_in));
      }
      b.add(conv(LayerKind::Conv2d, p + ".dw", exp_ch, exp_ch, {3, 3, 1},
                 {s_out, s_out, 1}, exp_ch));
      b.add(bn(p + ".dw.bn", exp_ch, s_out * s_out));
      b.add(elemwise(p + ".dw.relu6", exp_ch * s_out * s_out));
      b.add(conv(LayerKind::Conv2d, p + ".project", exp_ch, blkcfg.out, {1, 1, 1},
                 {s_out, s_out, 1}));
      b.add(bn(p + ".project.bn", blkcfg.out, s_out * s_out));

      in_ch = blkcfg.out;
      spatial = s_out;
    }
  }

  b.stage = "stage5";
  b.add(conv(LayerKind::Conv2d, "conv_last", in_ch, 1280, {1, 1, 1},
             {spatial, spatial, 1}));
  b.add(bn("conv_last.bn", 1280, spatial * spatial));
  b.add(elemwise("conv_last.relu6", 1280 * spatial * spatial));

  b.stage = "head";
  b.add(pool("gap", 1280 * spatial * spatial));
  {
    LayerSpec fc;
    fc.kind = LayerKind::Fc;
    fc.name = "fc";
    fc.in_ch = 1280;
    fc.out_ch = static_cast<u64>(b.graph.classes);
    fc.bias = true;
    b.add(std::move(fc));
  }
}

}  // namespace

Backbone parse_backbone(const std::string& name) {
  if (name == "resnet50") return Backbone::ResNet50;
  if (name == "mobilenet_v2") return Backbone::MobileNetV2;
  throw ConfigError("unknown backbone '" + name + "'");
}

Variant parse_variant(const std::string& name) {
  if (name == "tsn") return Variant::Tsn;
  if (name == "tsm") return Variant::Tsm;
  if (name == "ste") return Variant::Ste;
  if (name == "ce") return Variant::Ce;
  if (name == "me") return Variant::Me;
  if (name == "action") return Variant::Action;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string backbone_name(Backbone b) {
  return b == Backbone::ResNet50 ? "resnet50" : "mobilenet_v2";
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Tsn: return "tsn";
    case Variant::Tsm: return "tsm";
    case Variant::Ste: return "ste";
    case Variant::Ce: return "ce";
    case Variant::Me: return "me";
    case Variant::Action: return "action";
  }
  return "tsn";
}

std::vector<std::string> legal_stages(Backbone b) {
  if (b == Backbone::ResNet50) return {"res2", "res3", "res4", "res5"};
  return {"stage2", "stage3", "stage4", "stage5"};
}

std::vector<LayerSpec> excitation_layers(Variant path, u64 channels, u64 h, u64 w) {
  const u64 red = reduced(channels);
  const u64 hw = h * w;
  std::vector<LayerSpec> out;
  auto emit_ste = [&] {
    out.push_back(pool("ste.channel_mean", channels * hw));
    out.push_back(conv(LayerKind::Conv3d, "ste.conv3d", 1, 1, {3, 3, 3}, {h, w, 1}, 1, true));
    out.push_back(elemwise("ste.sigmoid", hw));
    out.push_back(elemwise("ste.gate", channels * hw));
  };
  auto emit_ce = [&] {
    out.push_back(pool("ce.spatial_mean", channels * hw));
    out.push_back(conv(LayerKind::Conv2d, "ce.squeeze", channels, red, {1, 1, 1},
                       {1, 1, 1}, 1, true));
    out.push_back(conv(LayerKind::Conv1d, "ce.temporal", red, red, {3, 1, 1},
                       {1, 1, 1}, 1, true));
    out.push_back(conv(LayerKind::Conv2d, "ce.expand", red, channels, {1, 1, 1},
                       {1, 1, 1}, 1, true));
    out.push_back(elemwise("ce.sigmoid", channels));
    out.push_back(elemwise("ce.gate", channels * hw));
  };
  auto emit_me = [&] {
    out.push_back(conv(LayerKind::Conv2d, "me.squeeze", channels, red, {1, 1, 1},
                       {h, w, 1}, 1, true));
    out.push_back(conv(LayerKind::Conv2d, "me.diff", red, red, {3, 3, 1},
                       {h, w, 1}, red, true));
    out.push_back(elemwise("me.subtract", red * hw));
    out.push_back(pool("me.spatial_mean", red * hw));
    out.push_back(conv(LayerKind::Conv2d, "me.expand", red, channels, {1, 1, 1},
                       {1, 1, 1}, 1, true));
    out.push_back(elemwise("me.sigmoid", channels));
    out.push_back(elemwise("me.gate", channels * hw));
  };
  switch (path) {
    case Variant::Ste: emit_ste(); break;
    case Variant::Ce: emit_ce(); break;
    case Variant::Me: emit_me(); break;
    case Variant::Action:
      emit_ste();
      emit_ce();
      emit_me();
      // three residual path outputs are summed elementwise
      out.push_back(elemwise("action.sum", 2 * channels * hw));
      break;
    default:
      throw ConfigError("excitation_layers: path must be ste/ce/me/action");
  }
  return out;
}

std::pair<u64, u64> excitation_site_cost(Variant path, u64 channels, u64 h, u64 w,
                                         int segments) {
  u64 macs = 0, params = 0;
  for (const LayerSpec& l : excitation_layers(path, channels, h, w)) {
    layer_cost(l, macs, params);
  }
  return {macs * static_cast<u64>(segments), params};
}

ArchGraph build_backbone(Backbone b, Variant v, int segments, int classes,
                         const std::vector<std::string>& stages) {
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (classes < 1) throw ConfigError("classes must be >= 1");
  const std::set<std::string> active = resolve_stages(b, stages);

  Builder builder;
  builder.graph.backbone = b;
  builder.graph.variant = v;
  builder.graph.segments = segments;
  builder.graph.classes = classes;
  builder.graph.stages.assign(active.begin(), active.end());

  if (b == Backbone::ResNet50) {
    build_resnet50(builder, active);
  } else {
    build_mobilenet_v2(builder, active);
  }
  return std::move(builder.graph);
}

CostReport count_cost(const ArchGraph& g) {
  CostReport report;
  std::vector<StageCost> stages;
  for (const LayerSpec& l : g.layers) {
    u64 macs = 0, params = 0;
    layer_cost(l, macs, params);
    macs *= static_cast<u64>(g.segments);
    report.macs += macs;
    report.params += params;
    auto it = std::find_if(stages.begin(), stages.end(),
                           [&](const StageCost& s) { return s.stage == l.stage; });
    if (it == stages.end()) {
      stages.push_back({l.stage, macs, params});
    } else {
      it->macs += macs;
      it->params += params;
    }
  }
  report.per_stage = std::move(stages);
  return report;
}

std::size_t count_module_sites(const ArchGraph& g) {
  std::size_t n = 0;
  for (const LayerSpec& l : g.layers) {
    if (l.kind == LayerKind::Excitation || l.kind == LayerKind::Shift) ++n;
  }
  return n;
}

DeltaReport delta_report(const CostReport& base, const CostReport& variant,
                         double base_top1, double variant_top1) {
  DeltaReport d;
  d.dmacs = static_cast<double>(variant.macs) - static_cast<double>(base.macs);
  d.dmacs_pct = base.macs == 0 ? 0.0 : 100.0 * d.dmacs / static_cast<double>(base.macs);
  d.dparams = static_cast<double>(variant.params) - static_cast<double>(base.params);
  d.dtop1 = variant_top1 - base_top1;
  return d;
}

double efficiency(double delta_flops_pct, double delta_top1_pct) {
  if (delta_top1_pct == 0.0) {
    throw DomainError("efficiency: accuracy delta must be nonzero");
  }
  return delta_flops_pct / delta_top1_pct;
}

}  // namespace actionkit::cost
