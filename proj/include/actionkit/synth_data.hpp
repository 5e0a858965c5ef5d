#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "actionkit/rng.hpp"
#include "actionkit/tensor.hpp"

namespace actionkit {

// Four classes in two temporal-reversal pairs: a blob translating
// left-to-right / right-to-left, and a bar rotating about the frame center
// clockwise / counterclockwise. Paired samples share parameters, so a
// reversed sample is bit-identical to its partner before noise.
enum class MotionKind { Translate, Rotate };

inline const std::vector<std::string>& direction_class_names() {
  static const std::vector<std::string> names = {"translate_lr", "translate_rl",
                                                 "rotate_cw", "rotate_ccw"};
  return names;
}

struct VideoMeta {
  MotionKind kind = MotionKind::Translate;
  int direction = 1;  // -1 plays the base sequence backwards
  int label = 0;
  double blob_sigma = 2.5;  // blob radius, or bar half-thickness
  // translate parameters; (y0, x0) doubles as the rotation pivot
  double y0 = 0, x0 = 0, x1 = 0;
  // rotation parameters
  double bar_len = 0, phase = 0, turns = 1;
  // per-frame global shake and brightness flicker, part of the clean
  // sequence (reversed with it)
  double jitter = 0;
  double flicker = 0;
  std::uint64_t jitter_seed = 0;
  std::uint64_t noise_seed = 0;

  double speed(std::size_t frames) const;
};

struct SyntheticVideo {
  Tensor<float> frames;  // (F, 1, H, W), values in [0, 1]
  int label = 0;
  VideoMeta meta;
};

struct ClipDataset {
  std::vector<SyntheticVideo> videos;
  std::vector<std::string> class_names;
  std::string split;
  std::size_t frame_count = 0;
  std::size_t height = 0, width = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

// Deterministic noise-free frame for (meta, frame index); the generator and
// any later consumer (e.g. heatmap checks) share this single definition.
Tensor<float> render_clean_frame(const VideoMeta& meta, std::size_t frame,
                                 std::size_t frames, std::size_t h, std::size_t w);

// Blob center (y, x) of the clean frame.
std::array<double, 2> blob_center(const VideoMeta& meta, std::size_t frame,
                                  std::size_t frames);

ClipDataset gen_direction_dataset(std::size_t n_per_class, std::size_t frames,
                                  std::size_t h, std::size_t w, double noise,
                                  std::uint64_t seed,
                                  const std::string& split = "train");

enum class SampleMode { Random, Center };

// TSN segment sampling: frames are split into T near-equal segments (the
// remainder spreads over the leading segments) and one index is drawn from
// each. Indices are strictly increasing.
std::vector<std::size_t> tsn_sample_indices(std::size_t raw_frames, std::size_t segments,
                                            SampleMode mode, Rng& rng);

// (T, C, H, W) clip gathered at the sampled indices.
Tensor<float> sample_clip(const SyntheticVideo& video, std::size_t segments,
                          SampleMode mode, Rng& rng);

// Dataset directory: manifest.json plus one ATNZ file per video.
void save_dataset(const std::filesystem::path& dir, const ClipDataset& train,
                  const ClipDataset& val);
struct DatasetPair {
  ClipDataset train;
  ClipDataset val;
};
DatasetPair load_dataset(const std::filesystem::path& dir);

}  // namespace actionkit
