#include "actionkit/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "actionkit/serialize.hpp"

namespace actionkit {

namespace {

Parameter<float> conv3x3_init(std::size_t cout, std::size_t cin, Rng& rng) {
  const std::size_t fan_in = cin * 9;
  Tensor<float> w({cout, cin, 3, 3});
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  return Parameter<float>(std::move(w));
}

ConvBnLayer make_conv_bn(std::size_t cout, std::size_t cin, Rng& rng) {
  ConvBnLayer l;
  l.w = conv3x3_init(cout, cin, rng);
  l.gamma = Parameter<float>(Tensor<float>::full({cout}, 1.0f));
  l.beta = Parameter<float>(Tensor<float>::zeros({cout}));
  l.bn = BnState<float>(cout);
  return l;
}

}  // namespace

ToyModule parse_toy_module(const std::string& name) {
  if (name == "none") return ToyModule::None;
  if (name == "shift") return ToyModule::Shift;
  if (name == "ste") return ToyModule::Ste;
  if (name == "ce") return ToyModule::Ce;
  if (name == "me") return ToyModule::Me;
  if (name == "action") return ToyModule::Action;
  throw ConfigError("unknown module '" + name + "'");
}

std::string toy_module_name(ToyModule m) {
  switch (m) {
    case ToyModule::None: return "none";
    case ToyModule::Shift: return "shift";
    case ToyModule::Ste: return "ste";
    case ToyModule::Ce: return "ce";
    case ToyModule::Me: return "me";
    case ToyModule::Action: return "action";
  }
  return "none";
}

ToyNet::ToyNet(ToyNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  for (std::size_t wdt : cfg_.widths) {
    if (wdt < 1) throw ConfigError("toynet widths must be >= 1");
  }
  if (cfg_.classes < 1) throw ConfigError("toynet needs at least one class");

  Rng rng(Rng::mix(seed, 0x70CE7));
  stem_ = make_conv_bn(cfg_.widths[0], cfg_.in_channels, rng);

  const std::array<std::size_t, 3> stage_in{cfg_.widths[0], cfg_.widths[0], cfg_.widths[1]};
  for (std::size_t i = 0; i < 3; ++i) {
    Stage& st = stages_[i];
    st.conv = make_conv_bn(cfg_.widths[i], stage_in[i], rng);
    st.pool = i == 1;  // 16x16 -> 8x8 after stage 2
    if (cfg_.module != ToyModule::None && cfg_.module != ToyModule::Shift &&
        cfg_.module_stages[i]) {
      const std::size_t c = stage_in[i];
      if (cfg_.module == ToyModule::Ste || cfg_.module == ToyModule::Action) {
        st.paths.ste = SteWeights<float>::init(rng);
      }
      if (cfg_.module == ToyModule::Ce || cfg_.module == ToyModule::Action) {
        st.paths.ce = CeWeights<float>::init(c, rng);
      }
      if (cfg_.module == ToyModule::Me || cfg_.module == ToyModule::Action) {
        st.paths.me = MeWeights<float>::init(c, rng);
      }
    }
  }

  {
    Tensor<float> w({cfg_.classes, cfg_.widths[2]});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.widths[2]));
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
    fc_w_ = Parameter<float>(std::move(w));
    fc_b_ = Parameter<float>(Tensor<float>::zeros({cfg_.classes}));
  }
}

Var<float> ToyNet::apply_module(Tape<float>& tape, Var<float> x4, Stage& stage,
                                std::size_t n, std::size_t t) {
  const Shape s4 = tape.value(x4).shape();
  const bool has_path = stage.paths.ste || stage.paths.ce || stage.paths.me;
  const bool is_shift = cfg_.module == ToyModule::Shift;
  if (!has_path && !is_shift) return x4;

  Var<float> x5 = tape.reshape(x4, {n, t, s4[1], s4[2], s4[3]});
  if (is_shift) {
    x5 = tape.temporal_shift(x5, cfg_.shift_fraction);
  } else if (cfg_.module == ToyModule::Action) {
    ActionVars<float> vars{lift(tape, *stage.paths.ste), lift(tape, *stage.paths.ce),
                           lift(tape, *stage.paths.me)};
    x5 = action_forward(tape, x5, vars);
  } else if (stage.paths.ste) {
    x5 = ste_forward(tape, x5, lift(tape, *stage.paths.ste));
  } else if (stage.paths.ce) {
    x5 = ce_forward(tape, x5, lift(tape, *stage.paths.ce));
  } else if (stage.paths.me) {
    x5 = me_forward(tape, x5, lift(tape, *stage.paths.me));
  }
  return tape.reshape(x5, s4);
}

ToyNet::Forward ToyNet::forward(Tape<float>& tape, Var<float> clips, bool training) {
  const Shape& s = tape.value(clips).shape();
  if (s.size() != 5) throw ShapeError("toynet expects (N,T,C,H,W) clips");
  if (s[2] != cfg_.in_channels) throw ShapeError("toynet: channel count mismatch");
  if (s[3] % 4 || s[4] % 4) throw ShapeError("toynet: spatial extents must be divisible by 4");
  const std::size_t n = s[0], t = s[1];

  Var<float> x = tape.reshape(clips, {n * t, s[2], s[3], s[4]});
  ConvOpts c3;
  c3.pad = {1, 1, 0};

  x = tape.convolve(x, tape.param(stem_.w), std::nullopt, c3);
  x = tape.batchnorm(x, tape.param(stem_.gamma), tape.param(stem_.beta), stem_.bn, training);
  x = tape.relu(x);
  x = tape.avg_pool2x2(x);

  for (Stage& st : stages_) {
    const bool shift_here =
        cfg_.module == ToyModule::Shift && cfg_.module_stages[&st - stages_.data()];
    if (st.paths.ste || st.paths.ce || st.paths.me || shift_here) {
      x = apply_module(tape, x, st, n, t);
    }
    x = tape.convolve(x, tape.param(st.conv.w), std::nullopt, c3);
    x = tape.batchnorm(x, tape.param(st.conv.gamma), tape.param(st.conv.beta), st.conv.bn,
                       training);
    x = tape.relu(x);
    if (st.pool) x = tape.avg_pool2x2(x);
  }

  Forward out;
  out.features = x;
  Var<float> pooled = tape.mean_axis(tape.mean_axis(x, 3, false), 2, false);  // (N*T, C)
  out.frame_logits = tape.linear(pooled, tape.param(fc_w_), tape.param(fc_b_));
  Var<float> seq = tape.reshape(out.frame_logits, {n, t, cfg_.classes});
  out.consensus = tape.segment_consensus(seq);
  return out;
}

std::vector<Parameter<float>*> ToyNet::parameters() {
  std::vector<Parameter<float>*> params;
  auto push_conv_bn = [&](ConvBnLayer& l) {
    params.push_back(&l.w);
    params.push_back(&l.gamma);
    params.push_back(&l.beta);
  };
  push_conv_bn(stem_);
  for (Stage& st : stages_) {
    if (st.paths.ste) {
      params.push_back(&st.paths.ste->kernel);
      params.push_back(&st.paths.ste->bias);
    }
    if (st.paths.ce) {
      auto& c = *st.paths.ce;
      for (Parameter<float>* p : {&c.squeeze_w, &c.squeeze_b, &c.temporal_w,
                                  &c.temporal_b, &c.expand_w, &c.expand_b}) {
        params.push_back(p);
      }
    }
    if (st.paths.me) {
      auto& m = *st.paths.me;
      for (Parameter<float>* p : {&m.squeeze_w, &m.squeeze_b, &m.diff_w, &m.diff_b,
                                  &m.expand_w, &m.expand_b}) {
        params.push_back(p);
      }
    }
    push_conv_bn(st.conv);
  }
  params.push_back(&fc_w_);
  params.push_back(&fc_b_);
  return params;
}

std::size_t ToyNet::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter<float>* p : const_cast<ToyNet*>(this)->parameters()) {
    n += p->value.size();
  }
  return n;
}

// ---- snapshots --------------------------------------------------------------

std::vector<std::pair<std::string, Tensor<float>*>> ToyNet::named_tensors() {
  std::vector<std::pair<std::string, Tensor<float>*>> out;
  auto conv_bn = [&](const std::string& prefix, ConvBnLayer& l) {
    out.emplace_back(prefix + ".conv.w", &l.w.value);
    out.emplace_back(prefix + ".bn.gamma", &l.gamma.value);
    out.emplace_back(prefix + ".bn.beta", &l.beta.value);
    out.emplace_back(prefix + ".bn.running_mean", &l.bn.running_mean);
    out.emplace_back(prefix + ".bn.running_var", &l.bn.running_var);
  };
  conv_bn("stem", stem_);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = "stage" + std::to_string(i + 1);
    Stage& st = stages_[i];
    if (st.paths.ste) {
      out.emplace_back(p + ".ste.kernel", &st.paths.ste->kernel.value);
      out.emplace_back(p + ".ste.bias", &st.paths.ste->bias.value);
    }
    if (st.paths.ce) {
      auto& c = *st.paths.ce;
      out.emplace_back(p + ".ce.squeeze_w", &c.squeeze_w.value);
      out.emplace_back(p + ".ce.squeeze_b", &c.squeeze_b.value);
      out.emplace_back(p + ".ce.temporal_w", &c.temporal_w.value);
      out.emplace_back(p + ".ce.temporal_b", &c.temporal_b.value);
      out.emplace_back(p + ".ce.expand_w", &c.expand_w.value);
      out.emplace_back(p + ".ce.expand_b", &c.expand_b.value);
    }
    if (st.paths.me) {
      auto& m = *st.paths.me;
      out.emplace_back(p + ".me.squeeze_w", &m.squeeze_w.value);
      out.emplace_back(p + ".me.squeeze_b", &m.squeeze_b.value);
      out.emplace_back(p + ".me.diff_w", &m.diff_w.value);
      out.emplace_back(p + ".me.diff_b", &m.diff_b.value);
      out.emplace_back(p + ".me.expand_w", &m.expand_w.value);
      out.emplace_back(p + ".me.expand_b", &m.expand_b.value);
    }
    conv_bn(p, st.conv);
  }
  out.emplace_back("fc.w", &fc_w_.value);
  out.emplace_back("fc.b", &fc_b_.value);
  return out;
}

std::vector<std::pair<std::string, const Tensor<float>*>> ToyNet::named_tensors() const {
  auto mut = const_cast<ToyNet*>(this)->named_tensors();
  std::vector<std::pair<std::string, const Tensor<float>*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

void ToyNet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format actionkit-weights-v1\n";
  manifest << "module " << toy_module_name(cfg_.module) << "\n";
  manifest << "in_channels " << cfg_.in_channels << "\n";
  manifest << "widths " << cfg_.widths[0] << "," << cfg_.widths[1] << "," << cfg_.widths[2]
           << "\n";
  manifest << "classes " << cfg_.classes << "\n";
  manifest << "stages " << (cfg_.module_stages[0] ? "1" : "") << ","
           << (cfg_.module_stages[1] ? "2" : "") << ","
           << (cfg_.module_stages[2] ? "3" : "") << "\n";
  manifest << "shift_fraction " << io::format_number(cfg_.shift_fraction) << "\n";
  for (const auto& [role, tensor] : named_tensors()) {
    std::string file = role;
    std::replace(file.begin(), file.end(), '.', '_');
    file += ".atnz";
    io::write_atnz(dir / file, *tensor);
    manifest << "tensor " << role << " " << file << " ";
    for (std::size_t i = 0; i < tensor->rank(); ++i) {
      manifest << (i ? "x" : "") << tensor->shape()[i];
    }
    manifest << "\n";
  }
  io::write_text_file(dir / "manifest.txt", manifest.str());
}

ToyNet ToyNet::load(const std::filesystem::path& dir) {
  const std::string text = io::read_text_file(dir / "manifest.txt");
  std::istringstream is(text);
  std::string line;
  ToyNetConfig cfg;
  std::vector<std::pair<std::string, std::string>> tensors;  // role -> file
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "actionkit-weights-v1") throw IoError("unknown weights format " + fmt);
    } else if (key == "module") {
      std::string m;
      ls >> m;
      cfg.module = parse_toy_module(m);
    } else if (key == "in_channels") {
      ls >> cfg.in_channels;
    } else if (key == "widths") {
      std::string spec;
      ls >> spec;
      std::replace(spec.begin(), spec.end(), ',', ' ');
      std::istringstream ws(spec);
      ws >> cfg.widths[0] >> cfg.widths[1] >> cfg.widths[2];
    } else if (key == "classes") {
      ls >> cfg.classes;
    } else if (key == "stages") {
      std::string spec;
      ls >> spec;
      cfg.module_stages = {false, false, false};
      for (char c : spec) {
        if (c >= '1' && c <= '3') cfg.module_stages[static_cast<std::size_t>(c - '1')] = true;
      }
    } else if (key == "shift_fraction") {
      ls >> cfg.shift_fraction;
    } else if (key == "tensor") {
      std::string role, file;
      ls >> role >> file;
      tensors.emplace_back(role, file);
    }
  }
  ToyNet net(cfg, 0);
  auto named = net.named_tensors();
  for (const auto& [role, file] : tensors) {
    auto it = std::find_if(named.begin(), named.end(),
                           [&](const auto& p) { return p.first == role; });
    if (it == named.end()) throw IoError("weights manifest names unknown tensor " + role);
    Tensor<float> t = io::read_atnz(dir / file);
    if (t.shape() != it->second->shape()) {
      throw IoError("tensor " + role + " has shape " + shape_str(t.shape()) +
                    ", expected " + shape_str(it->second->shape()));
    }
    *it->second = std::move(t);
  }
  return net;
}

// ---- training / evaluation ---------------------------------------------------

namespace {

Tensor<float> stack_clips(const ClipDataset& data, const std::vector<std::size_t>& ids,
                          std::size_t segments, SampleMode mode, std::uint64_t seed,
                          int epoch) {
  const SyntheticVideo& first = data.videos.at(ids.at(0));
  const Shape& fs = first.frames.shape();
  Tensor<float> batch({ids.size(), segments, fs[1], fs[2], fs[3]});
  const std::size_t clip_sz = segments * fs[1] * fs[2] * fs[3];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Rng rng(Rng::mix(Rng::mix(seed, 0xC11FULL + ids[i]),
                     static_cast<std::uint64_t>(epoch)));
    Tensor<float> clip = sample_clip(data.videos[ids[i]], segments, mode, rng);
    std::copy(clip.data(), clip.data() + clip_sz, batch.data() + i * clip_sz);
  }
  return batch;
}

}  // namespace

std::vector<EpochStats> train_toynet(ToyNet& net, const ClipDataset& data,
                                     const TrainConfig& cfg) {
  if (data.videos.empty()) throw DataError("train: empty dataset");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  for (std::size_t i = 0; i < cfg.decay_epochs.size(); ++i) {
    if (cfg.decay_epochs[i] >= cfg.epochs || cfg.decay_epochs[i] < 1 ||
        (i > 0 && cfg.decay_epochs[i] <= cfg.decay_epochs[i - 1])) {
      throw ConfigError("train: decay epochs must be strictly increasing and below epochs");
    }
  }

  const std::size_t n = data.videos.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> history;
  auto params = net.parameters();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (int de : cfg.decay_epochs) {
      if (epoch >= de) lr /= 10.0;
    }

    // deterministic Fisher-Yates shuffle per epoch
    Rng shuffle_rng(Rng::mix(Rng::mix(cfg.seed, 0x54FF1EULL),
                             static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    std::size_t batches = 0, correct = 0;
    for (std::size_t off = 0; off < n; off += cfg.batch) {
      const std::size_t b = std::min(cfg.batch, n - off);
      std::vector<std::size_t> ids(order.begin() + off, order.begin() + off + b);
      std::vector<std::size_t> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        labels[i] = static_cast<std::size_t>(data.videos[ids[i]].label);
      }
      Tensor<float> batch =
          stack_clips(data, ids, cfg.segments, SampleMode::Random, cfg.seed, epoch);

      Tape<float> tape;
      Var<float> clips = tape.constant(std::move(batch));
      ToyNet::Forward fw = net.forward(tape, clips, /*training=*/true);
      Var<float> loss = tape.softmax_xent(fw.consensus, labels);
      const double loss_v = tape.value(loss)[0];
      if (!std::isfinite(loss_v)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batches));
      }
      const Tensor<float>& logits = tape.value(fw.consensus);
      for (std::size_t i = 0; i < b; ++i) {
        std::size_t argmax = 0;
        for (std::size_t k = 1; k < net.config().classes; ++k) {
          if (logits[i * net.config().classes + k] >
              logits[i * net.config().classes + argmax]) {
            argmax = k;
          }
        }
        if (argmax == labels[i]) ++correct;
      }
      tape.backward(loss);
      sgd_momentum_step(params, static_cast<float>(lr), static_cast<float>(cfg.momentum),
                        static_cast<float>(cfg.weight_decay));
      loss_sum += loss_v;
      ++batches;
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.loss = loss_sum / static_cast<double>(batches);
    st.top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    history.push_back(st);
  }
  return history;
}

Tensor<float> toynet_logits(ToyNet& net, const Tensor<float>& clips) {
  Tape<float> tape;
  Var<float> v = tape.constant(Tensor<float>(clips));
  ToyNet::Forward fw = net.forward(tape, v, /*training=*/false);
  return tape.value(fw.consensus);
}

EvalResult evaluate_toynet(ToyNet& net, const ClipDataset& data, std::size_t segments,
                           std::size_t batch) {
  if (data.videos.empty()) throw DataError("evaluate: empty dataset");
  const std::size_t n = data.videos.size();
  const std::size_t cls = net.config().classes;
  std::size_t top1 = 0, top5 = 0;
  Rng rng(0);  // center mode draws nothing
  for (std::size_t off = 0; off < n; off += batch) {
    const std::size_t b = std::min(batch, n - off);
    std::vector<std::size_t> ids(b);
    std::iota(ids.begin(), ids.end(), off);
    Tensor<float> clips = stack_clips(data, ids, segments, SampleMode::Center, 0, 0);
    Tensor<float> logits = toynet_logits(net, clips);
    for (std::size_t i = 0; i < b; ++i) {
      const float* row = logits.data() + i * cls;
      const std::size_t label = static_cast<std::size_t>(data.videos[off + i].label);
      std::size_t rank = 0;
      for (std::size_t k = 0; k < cls; ++k) {
        if (row[k] > row[label] || (row[k] == row[label] && k < label)) ++rank;
      }
      if (rank == 0) ++top1;
      if (rank < 5) ++top5;
    }
  }
  EvalResult r;
  r.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(n);
  r.top5 = 100.0 * static_cast<double>(top5) / static_cast<double>(n);
  return r;
}

Tensor<float> cam_heatmaps(ToyNet& net, const Tensor<float>& clip, std::size_t cls) {
  if (clip.rank() != 4) throw ShapeError("cam_heatmaps: clip must be (T, C, H, W)");
  if (cls >= net.config().classes) throw DataError("cam_heatmaps: class out of range");
  const Shape& s = clip.shape();
  Tape<float> tape;
  Var<float> v = tape.constant(clip.reshaped({1, s[0], s[1], s[2], s[3]}));
  ToyNet::Forward fw = net.forward(tape, v, /*training=*/false);
  const Tensor<float>& feat = tape.value(fw.features);  // (T, C3, hf, wf)
  const std::size_t t = feat.shape()[0];
  const std::size_t c = feat.shape()[1];
  const std::size_t hf = feat.shape()[2];
  const std::size_t wf = feat.shape()[3];
  const Tensor<float>& w = net.fc_weight();
  Tensor<float> heat({t, hf, wf});
  for (std::size_t ti = 0; ti < t; ++ti) {
    for (std::size_t p = 0; p < hf * wf; ++p) {
      float acc = 0.0f;
      for (std::size_t ch = 0; ch < c; ++ch) {
        acc += w[cls * c + ch] * feat[(ti * c + ch) * hf * wf + p];
      }
      heat[ti * hf * wf + p] = acc;
    }
  }
  return heat;
}

Tensor<float> normalize_heatmaps(const Tensor<float>& raw) {
  if (raw.rank() != 3) throw ShapeError("normalize_heatmaps: expected (T, H, W)");
  Tensor<float> out(raw.shape());
  const std::size_t t = raw.shape()[0];
  const std::size_t sz = raw.shape()[1] * raw.shape()[2];
  for (std::size_t ti = 0; ti < t; ++ti) {
    const float* src = raw.data() + ti * sz;
    float lo = src[0], hi = src[0];
    for (std::size_t i = 1; i < sz; ++i) {
      lo = std::min(lo, src[i]);
      hi = std::max(hi, src[i]);
    }
    float* dst = out.data() + ti * sz;
    const float range = hi - lo;
    for (std::size_t i = 0; i < sz; ++i) {
      dst[i] = range > 1e-12f ? (src[i] - lo) / range : 0.0f;
    }
  }
  return out;
}

cost::ArchGraph toynet_arch_graph(const ToyNetConfig& cfg, std::size_t h, std::size_t w,
                                  int segments) {
  using cost::LayerKind;
  using cost::LayerSpec;
  if (h % 4 || w % 4) throw ShapeError("toynet_arch_graph: extents must be divisible by 4");

  cost::ArchGraph g;
  g.variant = cost::Variant::Tsn;
  g.segments = segments;
  g.classes = static_cast<int>(cfg.classes);

  auto conv_bn_relu = [&](const std::string& stage, std::size_t cin, std::size_t cout,
                          std::size_t sh, std::size_t sw) {
    LayerSpec conv;
    conv.kind = LayerKind::Conv2d;
    conv.stage = stage;
    conv.name = stage + ".conv";
    conv.in_ch = cin;
    conv.out_ch = cout;
    conv.kernel = {3, 3, 1};
    conv.out_spatial = {sh, sw, 1};
    g.layers.push_back(conv);
    LayerSpec bn;
    bn.kind = LayerKind::BatchNorm;
    bn.stage = stage;
    bn.name = stage + ".bn";
    bn.bn_channels = cout;
    bn.numel = cout * sh * sw;
    g.layers.push_back(bn);
    LayerSpec relu;
    relu.kind = LayerKind::Elementwise;
    relu.stage = stage;
    relu.name = stage + ".relu";
    relu.numel = cout * sh * sw;
    g.layers.push_back(relu);
  };
  auto pool = [&](const std::string& stage, std::size_t numel) {
    LayerSpec p;
    p.kind = LayerKind::Pool;
    p.stage = stage;
    p.name = stage + ".pool";
    p.numel = numel;
    g.layers.push_back(p);
  };

  std::size_t sh = h, sw = w;
  conv_bn_relu("stem", cfg.in_channels, cfg.widths[0], sh, sw);
  pool("stem", cfg.widths[0] * sh * sw);
  sh /= 2;
  sw /= 2;

  const std::array<std::size_t, 3> stage_in{cfg.widths[0], cfg.widths[0], cfg.widths[1]};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string stage = "stage" + std::to_string(i + 1);
    if (cfg.module != ToyModule::None && cfg.module_stages[i]) {
      if (cfg.module == ToyModule::Shift) {
        LayerSpec shift;
        shift.kind = LayerKind::Shift;
        shift.stage = stage;
        shift.name = stage + ".shift";
        g.layers.push_back(shift);
      } else {
        LayerSpec site;
        site.kind = LayerKind::Excitation;
        site.stage = stage;
        site.name = stage + ".module";
        site.path = cfg.module == ToyModule::Ste   ? cost::Variant::Ste
                    : cfg.module == ToyModule::Ce  ? cost::Variant::Ce
                    : cfg.module == ToyModule::Me  ? cost::Variant::Me
                                                   : cost::Variant::Action;
        site.internals = cost::excitation_layers(site.path, stage_in[i], sh, sw);
        g.layers.push_back(site);
      }
    }
    conv_bn_relu(stage, stage_in[i], cfg.widths[i], sh, sw);
    if (i == 1) {
      pool(stage, cfg.widths[i] * sh * sw);
      sh /= 2;
      sw /= 2;
    }
  }

  pool("head", cfg.widths[2] * sh * sw);
  LayerSpec fc;
  fc.kind = LayerKind::Fc;
  fc.stage = "head";
  fc.name = "fc";
  fc.in_ch = cfg.widths[2];
  fc.out_ch = cfg.classes;
  fc.bias = true;
  g.layers.push_back(fc);
  return g;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,lr,loss,top1\n";
  for (const EpochStats& e : history) {
    os << e.epoch << "," << io::format_number(e.lr) << "," << io::format_number(e.loss)
       << "," << io::format_number(e.top1) << "\n";
  }
  return os.str();
}

}  // namespace actionkit
