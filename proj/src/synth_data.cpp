#include "actionkit/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "actionkit/errors.hpp"
#include "actionkit/serialize.hpp"
#include "json.hpp"

namespace actionkit {

namespace {

constexpr double kTau = 6.283185307179586477;

double progress(std::size_t f, std::size_t frames) {
  return frames > 1 ? static_cast<double>(f) / static_cast<double>(frames - 1) : 0.0;
}

// deterministic per-base-frame shake offsets
std::array<double, 2> detail_jitter(const VideoMeta& m, std::size_t f) {
  if (m.jitter <= 0.0) return {0.0, 0.0};
  Rng r(Rng::mix(m.jitter_seed, f));
  return {r.normal() * m.jitter, r.normal() * m.jitter};
}

// deterministic per-base-frame brightness factor in [1 - flicker, 1]
double detail_flicker(const VideoMeta& m, std::size_t f) {
  if (m.flicker <= 0.0) return 1.0;
  Rng r(Rng::mix(m.jitter_seed ^ 0xF11C4E8ULL, f));
  return 1.0 - m.flicker * r.uniform();
}

}  // namespace

double VideoMeta::speed(std::size_t frames) const {
  const double steps = frames > 1 ? static_cast<double>(frames - 1) : 1.0;
  if (kind == MotionKind::Translate) return std::abs(x1 - x0) / steps;
  return kTau * turns / steps;  // angular speed
}

Tensor<float> render_clean_frame(const VideoMeta& meta, std::size_t frame,
                                 std::size_t frames, std::size_t h, std::size_t w) {
  const std::size_t f = meta.direction >= 0 ? frame : frames - 1 - frame;
  const double p = progress(f, frames);
  // both classes draw an anisotropic gaussian bar; translate moves a bar of
  // fixed orientation, rotate spins one in place. Appearance alone therefore
  // separates the pairs only weakly.
  double cy, cx, theta;
  const auto [jy, jx] = detail_jitter(meta, f);
  if (meta.kind == MotionKind::Translate) {
    cy = meta.y0;
    cx = meta.x0 + (meta.x1 - meta.x0) * p;
    theta = meta.phase;
  } else {
    cy = meta.y0;
    cx = meta.x0;
    theta = meta.phase + kTau * meta.turns * p;
  }
  cy += jy;
  cx += jx;
  const double c = std::cos(theta), s = std::sin(theta);
  const double inv2a2 = 1.0 / (2.0 * meta.bar_len * meta.bar_len);
  const double inv2b2 = 1.0 / (2.0 * meta.blob_sigma * meta.blob_sigma);
  const double bright = detail_flicker(meta, f);
  Tensor<float> img({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double u = dx * c + dy * s;   // along the bar
      const double v = -dx * s + dy * c;  // across the bar
      img[y * w + x] =
          static_cast<float>(bright * std::exp(-(u * u * inv2a2 + v * v * inv2b2)));
    }
  }
  return img;
}

std::array<double, 2> blob_center(const VideoMeta& meta, std::size_t frame,
                                  std::size_t frames) {
  const std::size_t f = meta.direction >= 0 ? frame : frames - 1 - frame;
  const auto [jy, jx] = detail_jitter(meta, f);
  if (meta.kind == MotionKind::Translate) {
    return {meta.y0 + jy, meta.x0 + (meta.x1 - meta.x0) * progress(f, frames) + jx};
  }
  return {meta.y0 + jy, meta.x0 + jx};  // the bar pivots in place
}

ClipDataset gen_direction_dataset(std::size_t n_per_class, std::size_t frames,
                                  std::size_t h, std::size_t w, double noise,
                                  std::uint64_t seed, const std::string& split) {
  if (frames < 8) throw ConfigError("gen_direction_dataset: need at least 8 raw frames");
  if (h < 16 || w < 16) throw ConfigError("gen_direction_dataset: extents must be >= 16");

  ClipDataset ds;
  ds.class_names = direction_class_names();
  ds.split = split;
  ds.frame_count = frames;
  ds.height = h;
  ds.width = w;
  ds.noise = noise;
  ds.seed = seed;

  Rng param_rng(Rng::mix(seed, 0x5EED));
  const double cy0 = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx0 = (static_cast<double>(w) - 1.0) / 2.0;

  auto render_video = [&](const VideoMeta& meta) {
    Tensor<float> vid({frames, 1, h, w});
    for (std::size_t f = 0; f < frames; ++f) {
      Tensor<float> img = render_clean_frame(meta, f, frames, h, w);
      std::copy(img.data(), img.data() + img.size(), vid.data() + f * h * w);
    }
    if (noise > 0.0) {
      Rng nrng(meta.noise_seed);
      for (std::size_t i = 0; i < vid.size(); ++i) {
        float v = vid[i] + static_cast<float>(nrng.normal() * noise);
        vid[i] = std::min(1.0f, std::max(0.0f, v));
      }
    }
    return vid;
  };

  const double wd = static_cast<double>(w);
  const double hd = static_cast<double>(h);
  const double scale = std::min(wd, hd);
  std::uint64_t video_counter = 0;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    // translate pair: identical parameters, the partner runs backwards; the
    // bar keeps a fixed random orientation while its center moves
    VideoMeta tm;
    tm.kind = MotionKind::Translate;
    tm.blob_sigma = param_rng.uniform(scale * 0.05, scale * 0.07);
    tm.bar_len = param_rng.uniform(scale * 0.16, scale * 0.26);
    tm.phase = param_rng.uniform(0.0, kTau);
    tm.y0 = param_rng.uniform(hd * 0.35, hd * 0.65);
    tm.x0 = param_rng.uniform(wd * 0.2, wd * 0.3);
    tm.x1 = param_rng.uniform(wd * 0.7, wd * 0.8);

    // rotating pair: same bar family pivoting in place, about 20 degrees
    // between adjacent sampled segments
    VideoMeta om;
    om.kind = MotionKind::Rotate;
    om.blob_sigma = param_rng.uniform(scale * 0.05, scale * 0.07);
    om.bar_len = param_rng.uniform(scale * 0.2, scale * 0.3);
    om.phase = param_rng.uniform(0.0, kTau);
    om.turns = param_rng.uniform(1.0, 1.4);
    om.y0 = cy0;  // pivot, recorded for blob_center()
    om.x0 = cx0;
    tm.jitter = om.jitter = 0.0;
    tm.flicker = om.flicker = 0.0;
    tm.jitter_seed = Rng::mix(seed, 0x71E500 + video_counter);
    om.jitter_seed = Rng::mix(seed, 0x71E600 + video_counter);

    for (int dir = 0; dir < 2; ++dir) {
      VideoMeta m = tm;
      m.direction = dir == 0 ? 1 : -1;
      m.label = dir;
      m.noise_seed = Rng::mix(seed, 0xBEEF00 + video_counter++);
      ds.videos.push_back({render_video(m), m.label, m});
    }
    for (int dir = 0; dir < 2; ++dir) {
      VideoMeta m = om;
      m.direction = dir == 0 ? 1 : -1;
      m.label = 2 + dir;
      m.noise_seed = Rng::mix(seed, 0xBEEF00 + video_counter++);
      ds.videos.push_back({render_video(m), m.label, m});
    }
  }
  return ds;
}

std::vector<std::size_t> tsn_sample_indices(std::size_t raw_frames, std::size_t segments,
                                            SampleMode mode, Rng& rng) {
  if (segments < 1) throw DataError("tsn_sample_indices: segments must be >= 1");
  if (raw_frames < segments) {
    throw DataError("tsn_sample_indices: video has " + std::to_string(raw_frames) +
                    " frames, fewer than " + std::to_string(segments) + " segments");
  }
  const std::size_t base = raw_frames / segments;
  const std::size_t rem = raw_frames % segments;
  std::vector<std::size_t> idx(segments);
  std::size_t start = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t len = base + (s < rem ? 1 : 0);
    if (mode == SampleMode::Center) {
      idx[s] = start + (len - 1) / 2;
    } else {
      idx[s] = start + rng.uniform_index(len);
    }
    start += len;
  }
  return idx;
}

Tensor<float> sample_clip(const SyntheticVideo& video, std::size_t segments,
                          SampleMode mode, Rng& rng) {
  const Shape& s = video.frames.shape();
  const std::size_t f = s[0], c = s[1], h = s[2], w = s[3];
  const auto idx = tsn_sample_indices(f, segments, mode, rng);
  Tensor<float> clip({segments, c, h, w});
  const std::size_t frame_sz = c * h * w;
  for (std::size_t t = 0; t < segments; ++t) {
    const float* src = video.frames.data() + idx[t] * frame_sz;
    std::copy(src, src + frame_sz, clip.data() + t * frame_sz);
  }
  return clip;
}

namespace {

using json = nlohmann::ordered_json;

json meta_to_json(const SyntheticVideo& v, const std::string& file) {
  json j;
  j["file"] = file;
  j["label"] = v.label;
  j["kind"] = v.meta.kind == MotionKind::Translate ? "translate" : "rotate";
  j["direction"] = v.meta.direction;
  j["blob_sigma"] = v.meta.blob_sigma;
  j["y0"] = v.meta.y0;
  j["x0"] = v.meta.x0;
  j["x1"] = v.meta.x1;
  j["bar_len"] = v.meta.bar_len;
  j["phase"] = v.meta.phase;
  j["turns"] = v.meta.turns;
  j["jitter"] = v.meta.jitter;
  j["flicker"] = v.meta.flicker;
  j["jitter_seed"] = v.meta.jitter_seed;
  j["noise_seed"] = v.meta.noise_seed;
  return j;
}

VideoMeta meta_from_json(const json& j) {
  VideoMeta m;
  m.kind = j.at("kind") == "rotate" ? MotionKind::Rotate : MotionKind::Translate;
  m.direction = j.at("direction").get<int>();
  m.label = j.at("label").get<int>();
  m.blob_sigma = j.at("blob_sigma").get<double>();
  m.y0 = j.at("y0").get<double>();
  m.x0 = j.at("x0").get<double>();
  m.x1 = j.at("x1").get<double>();
  m.bar_len = j.at("bar_len").get<double>();
  m.phase = j.at("phase").get<double>();
  m.turns = j.at("turns").get<double>();
  m.jitter = j.value("jitter", 0.0);
  m.flicker = j.value("flicker", 0.0);
  m.jitter_seed = j.value("jitter_seed", std::uint64_t{0});
  m.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  return m;
}

json split_to_json(const std::filesystem::path& dir, const ClipDataset& ds) {
  json arr = json::array();
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04zu.atnz", ds.split.c_str(), i);
    io::write_atnz(dir / name, ds.videos[i].frames);
    arr.push_back(meta_to_json(ds.videos[i], name));
  }
  return arr;
}

ClipDataset split_from_json(const std::filesystem::path& dir, const json& manifest,
                            const json& arr, const std::string& split) {
  ClipDataset ds;
  ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
  ds.split = split;
  ds.frame_count = manifest.at("frames").get<std::size_t>();
  ds.height = manifest.at("height").get<std::size_t>();
  ds.width = manifest.at("width").get<std::size_t>();
  ds.noise = manifest.at("noise").get<double>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  for (const json& entry : arr) {
    SyntheticVideo v;
    v.meta = meta_from_json(entry);
    v.label = v.meta.label;
    v.frames = io::read_atnz(dir / entry.at("file").get<std::string>());
    if (v.frames.rank() != 4) throw DataError("dataset video must be rank 4");
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const ClipDataset& train,
                  const ClipDataset& val) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "actionkit-dataset-v1";
  manifest["classes"] = train.class_names;
  manifest["frames"] = train.frame_count;
  manifest["height"] = train.height;
  manifest["width"] = train.width;
  manifest["noise"] = train.noise;
  manifest["seed"] = train.seed;
  manifest["splits"]["train"] = split_to_json(dir, train);
  manifest["splits"]["val"] = split_to_json(dir, val);
  io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetPair load_dataset(const std::filesystem::path& dir) {
  const json manifest = json::parse(io::read_text_file(dir / "manifest.json"));
  if (manifest.at("format") != "actionkit-dataset-v1") {
    throw DataError("unknown dataset format in " + (dir / "manifest.json").string());
  }
  DatasetPair pair;
  pair.train = split_from_json(dir, manifest, manifest.at("splits").at("train"), "train");
  pair.val = split_from_json(dir, manifest, manifest.at("splits").at("val"), "val");
  return pair;
}

}  // namespace actionkit
