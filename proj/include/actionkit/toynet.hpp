#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "actionkit/autodiff.hpp"
#include "actionkit/cost_model.hpp"
#include "actionkit/excitation.hpp"
#include "actionkit/synth_data.hpp"

namespace actionkit {

enum class ToyModule { None, Shift, Ste, Ce, Me, Action };

ToyModule parse_toy_module(const std::string& name);
std::string toy_module_name(ToyModule m);

// Small segment-based classifier: stem conv, three conv stages with an
// optional temporal module at each stage start, global average pool, FC head
// and segment consensus. Spatial extents must be divisible by 4.
struct ToyNetConfig {
  std::size_t in_channels = 1;
  std::array<std::size_t, 3> widths{16, 32, 64};
  std::size_t classes = 4;
  ToyModule module = ToyModule::None;
  std::array<bool, 3> module_stages{true, true, true};
  double shift_fraction = 0.125;
};

struct ConvBnLayer {
  Parameter<float> w;  // 3x3 conv, bias-free (BN follows)
  Parameter<float> gamma, beta;
  BnState<float> bn;
};

struct StagePaths {
  std::optional<SteWeights<float>> ste;
  std::optional<CeWeights<float>> ce;
  std::optional<MeWeights<float>> me;
};

class ToyNet {
 public:
  ToyNet(ToyNetConfig cfg, std::uint64_t seed);

  struct Forward {
    Var<float> consensus;     // (N, classes)
    Var<float> frame_logits;  // (N*T, classes)
    Var<float> features;      // (N*T, widths[2], H/4, W/4), pre-pool
  };
  // clips: (N, T, in_channels, H, W)
  Forward forward(Tape<float>& tape, Var<float> clips, bool training);

  std::vector<Parameter<float>*> parameters();
  std::size_t parameter_count() const;
  const ToyNetConfig& config() const { return cfg_; }
  const Tensor<float>& fc_weight() const { return fc_w_.value; }

  // Snapshot directory: manifest.txt naming each ATNZ tensor (role, file,
  // shape) plus the net configuration.
  void save(const std::filesystem::path& dir) const;
  static ToyNet load(const std::filesystem::path& dir);

 private:
  struct Stage {
    StagePaths paths;
    ConvBnLayer conv;
    bool pool = false;
  };

  Var<float> apply_module(Tape<float>& tape, Var<float> x4, Stage& stage,
                          std::size_t n, std::size_t t);
  std::vector<std::pair<std::string, const Tensor<float>*>> named_tensors() const;
  std::vector<std::pair<std::string, Tensor<float>*>> named_tensors();

  ToyNetConfig cfg_;
  ConvBnLayer stem_;
  std::array<Stage, 3> stages_;
  Parameter<float> fc_w_, fc_b_;

  friend struct ToyNetAccess;
};

struct TrainConfig {
  std::size_t segments = 8;
  int epochs = 20;
  std::size_t batch = 16;
  double lr = 0.08;
  std::vector<int> decay_epochs;  // strictly increasing, below epochs
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double top1 = 0;  // training accuracy, percent
};

std::vector<EpochStats> train_toynet(ToyNet& net, const ClipDataset& data,
                                     const TrainConfig& cfg);

struct EvalResult {
  double top1 = 0;
  double top5 = 0;
};

EvalResult evaluate_toynet(ToyNet& net, const ClipDataset& data, std::size_t segments,
                           std::size_t batch = 32);

// (N, classes) eval-mode consensus logits for a stack of clips (N,T,C,H,W).
Tensor<float> toynet_logits(ToyNet& net, const Tensor<float>& clips);

// Class activation maps for one clip (T, C, H, W): classifier-weighted sum of
// final-stage feature maps, one (H/4, W/4) map per frame. Raw values.
Tensor<float> cam_heatmaps(ToyNet& net, const Tensor<float>& clip, std::size_t cls);

// Per-frame min-max normalization to [0, 1]; flat frames map to zero.
Tensor<float> normalize_heatmaps(const Tensor<float>& raw);

std::string history_csv(const std::vector<EpochStats>& history);

// Accounting graph mirroring a built ToyNet at (h, w) input resolution. The
// analytic parameter count equals the built net's learnable scalar count.
cost::ArchGraph toynet_arch_graph(const ToyNetConfig& cfg, std::size_t h, std::size_t w,
                                  int segments);

}  // namespace actionkit
