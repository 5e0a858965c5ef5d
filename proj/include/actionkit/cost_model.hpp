#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "actionkit/errors.hpp"

namespace actionkit::cost {

using u64 = std::uint64_t;

enum class Backbone { ResNet50, MobileNetV2 };
enum class Variant { Tsn, Tsm, Ste, Ce, Me, Action };

Backbone parse_backbone(const std::string& name);
Variant parse_variant(const std::string& name);
std::string backbone_name(Backbone b);
std::string variant_name(Variant v);

enum class LayerKind {
  Conv2d,
  Conv1d,
  Conv3d,
  Fc,
  BatchNorm,
  Pool,
  Elementwise,
  Shift,
  Excitation,
};

// One per-frame accounting row. Counts are multiplied by the segment count T
// when the graph is totalled, so every row scales linearly in T.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  std::string stage;
  std::string name;
  // conv / fc
  u64 in_ch = 0, out_ch = 0, groups = 1;
  std::array<u64, 3> kernel{1, 1, 1};
  std::array<u64, 3> out_spatial{1, 1, 1};
  bool bias = false;
  // batchnorm / pool / elementwise
  u64 numel = 0;
  u64 bn_channels = 0;
  // excitation composite
  Variant path = Variant::Tsn;
  std::vector<LayerSpec> internals;
};

struct ArchGraph {
  Backbone backbone = Backbone::ResNet50;
  Variant variant = Variant::Tsn;
  int segments = 8;
  int classes = 1000;
  std::vector<std::string> stages;
  std::vector<LayerSpec> layers;
};

struct StageCost {
  std::string stage;
  u64 macs = 0;
  u64 params = 0;
};

struct CostReport {
  u64 macs = 0;
  u64 params = 0;
  std::vector<StageCost> per_stage;
  double macs_g() const { return static_cast<double>(macs) * 1e-9; }
  double params_m() const { return static_cast<double>(params) * 1e-6; }
};

std::vector<std::string> legal_stages(Backbone b);

// stages empty selects every legal insertion stage.
ArchGraph build_backbone(Backbone b, Variant v, int segments, int classes,
                         const std::vector<std::string>& stages = {});

CostReport count_cost(const ArchGraph& g);

// Per-frame rows of one excitation site at (channels, h, w).
std::vector<LayerSpec> excitation_layers(Variant path, u64 channels, u64 h, u64 w);

// (macs, params) of one site in isolation, macs already scaled by T.
std::pair<u64, u64> excitation_site_cost(Variant path, u64 channels, u64 h, u64 w,
                                         int segments);

std::size_t count_module_sites(const ArchGraph& g);

struct DeltaReport {
  double dmacs = 0;
  double dmacs_pct = 0;
  double dparams = 0;
  double dtop1 = 0;
};

DeltaReport delta_report(const CostReport& base, const CostReport& variant,
                         double base_top1, double variant_top1);

// Extra compute percent incurred per point of top-1 gained; smaller is more
// efficient. Throws DomainError when the accuracy delta is zero.
double efficiency(double delta_flops_pct, double delta_top1_pct);

}  // namespace actionkit::cost
