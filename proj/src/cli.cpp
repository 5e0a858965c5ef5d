#include "actionkit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "actionkit/cost_model.hpp"
#include "actionkit/errors.hpp"
#include "actionkit/serialize.hpp"
#include "actionkit/synth_data.hpp"
#include "actionkit/toynet.hpp"
#include "actionkit/verification.hpp"
#include "json.hpp"

namespace actionkit::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kUsage = R"(actionkit - multipath temporal excitation toolkit

usage: actionkit <command> [options]

commands:
  gradcheck   finite-difference verification of every differentiable op
  cost        analytic MAC / parameter report for backbone variants
  synth       generate the synthetic temporal-direction dataset
  train       train a toy segment classifier on a synthetic dataset
  eval        evaluate saved weights on a dataset split
  cam         export class activation maps for one clip

common options:
  --config FILE  TOML-style defaults; command-line flags override
  --seed N       run seed (every command is deterministic given it)
  --out DIR      output directory (a resolved-config snapshot is written there)
  --help         show command help
)";

const std::map<std::string, std::string>& command_usage() {
  static const std::map<std::string, std::string> usage = {
      {"gradcheck",
       "usage: actionkit gradcheck [--seed N] [--out DIR]\n"
       "Runs the finite-difference suite and prints the worst relative error\n"
       "per op and per excitation path. Exits nonzero if any exceeds 1e-4.\n"},
      {"cost",
       "usage: actionkit cost [--backbone resnet50|mobilenet_v2]\n"
       "                      [--variant tsn|tsm|ste|ce|me|action]\n"
       "                      [-T N] [--cls N] [--stages a,b,...] [--table3]\n"
       "                      [--base-top1 X --variant-top1 Y] [--out DIR]\n"
       "Emits a JSON cost report on stdout. --table3 reports all six ResNet-50\n"
       "variants with reference accuracies in one document.\n"},
      {"synth",
       "usage: actionkit synth --out DIR [--n-train N] [--n-val N] [--frames N]\n"
       "                       [--height N] [--width N] [--noise S] [--seed N]\n"
       "Writes a class-balanced reversal-pair dataset (manifest.json + ATNZ\n"
       "videos). Counts are per class.\n"},
      {"train",
       "usage: actionkit train --data DIR --out DIR [--module none|shift|ste|ce|me|action]\n"
       "                       [--stages 1,2,3] [--widths a,b,c] [--epochs N] [--lr X]\n"
       "                       [--decay e1,e2] [--batch N] [-T N] [--seed N]\n"
       "Trains the toy classifier; writes history.csv, weights/ and eval.json.\n"},
      {"eval",
       "usage: actionkit eval --data DIR --weights DIR [-T N] [--out DIR]\n"
       "Prints top-1/top-5 accuracy of saved weights on the validation split.\n"},
      {"cam",
       "usage: actionkit cam --data DIR --weights DIR --out DIR [--clip N]\n"
       "                     [--label N] [-T N]\n"
       "Exports per-frame class activation maps for one validation clip as an\n"
       "ATNZ tensor plus one PGM image per frame.\n"},
  };
  return usage;
}

// Merged file + command-line options; records every value it resolves so the
// snapshot reflects defaults too.
class ArgMap {
 public:
  ArgMap(std::map<std::string, std::string> values, std::set<std::string> allowed)
      : values_(std::move(values)), allowed_(std::move(allowed)) {
    for (const auto& [k, v] : values_) {
      if (!allowed_.count(k)) throw UsageError("unknown option --" + k);
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) {
    const std::string v = has(key) ? values_.at(key) : def;
    used_[key] = v;
    return v;
  }

  std::string required(const std::string& key) {
    if (!has(key)) throw UsageError("missing required option --" + key);
    return str(key, "");
  }

  long integer(const std::string& key, long def) {
    const std::string v = str(key, std::to_string(def));
    try {
      std::size_t pos = 0;
      const long out = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw UsageError("option --" + key + " expects an integer, got '" + v + "'");
    }
  }

  double number(const std::string& key, double def) {
    const std::string v = str(key, io::format_number(def));
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw UsageError("option --" + key + " expects a number, got '" + v + "'");
    }
  }

  std::uint64_t seed() {
    return static_cast<std::uint64_t>(integer("seed", 1));
  }

  bool flag(const std::string& key) {
    const bool v = has(key);
    used_[key] = v ? "true" : "false";
    return v;
  }

  const std::map<std::string, std::string>& resolved() const { return used_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> allowed_;
  mutable std::map<std::string, std::string> used_;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

void write_snapshot(const fs::path& dir, const std::string& command, const ArgMap& args) {
  std::map<std::string, std::string> kv = args.resolved();
  kv["command"] = command;
  io::write_text_file(dir / "config_resolved.toml", io::render_kv(kv));
}

// Published EgoGesture top-1 reference points (ResNet-50, 8 segments) used by
// the --table3 convenience report.
struct Table3Ref {
  cost::Variant variant;
  double top1;
};
const Table3Ref kTable3Refs[] = {
    {cost::Variant::Tsn, 83.1}, {cost::Variant::Tsm, 92.1}, {cost::Variant::Ste, 93.8},
    {cost::Variant::Ce, 93.8},  {cost::Variant::Me, 93.9},  {cost::Variant::Action, 94.2},
};
constexpr double kTsmRefTop1 = 92.1;

int cmd_cost(ArgMap& args) {
  const cost::Backbone backbone = cost::parse_backbone(args.str("backbone", "resnet50"));
  const cost::Variant variant = cost::parse_variant(args.str("variant", "action"));
  const int segments = static_cast<int>(args.integer("segments", 8));
  const int cls = static_cast<int>(args.integer("cls", 83));
  const std::vector<std::string> stages = split_csv(args.str("stages", ""));
  const bool table3 = args.flag("table3");
  args.seed();

  json doc;
  doc["backbone"] = cost::backbone_name(backbone);

  if (table3) {
    const cost::CostReport base =
        cost::count_cost(cost::build_backbone(backbone, cost::Variant::Tsn, segments, cls, stages));
    doc["variant"] = "table3";
    doc["T"] = segments;
    doc["CLS"] = cls;
    doc["stages"] = stages.empty() ? cost::legal_stages(backbone) : stages;
    json rows = json::array();
    for (const Table3Ref& ref : kTable3Refs) {
      const cost::CostReport r = cost::count_cost(
          cost::build_backbone(backbone, ref.variant, segments, cls, stages));
      const cost::DeltaReport d = cost::delta_report(base, r, kTsmRefTop1, ref.top1);
      json row;
      row["variant"] = cost::variant_name(ref.variant);
      row["macs_g"] = r.macs_g();
      row["params_m"] = r.params_m();
      row["dmacs_g"] = d.dmacs * 1e-9;
      row["dmacs_pct"] = d.dmacs_pct;
      row["dparams_m"] = d.dparams * 1e-6;
      row["top1_ref"] = ref.top1;
      if (d.dtop1 != 0.0) {
        row["eta"] = cost::efficiency(d.dmacs_pct, d.dtop1);
      } else {
        row["eta"] = nullptr;
      }
      rows.push_back(std::move(row));
    }
    doc["rows"] = std::move(rows);
  } else {
    const cost::ArchGraph graph = cost::build_backbone(backbone, variant, segments, cls, stages);
    const cost::CostReport r = cost::count_cost(graph);
    doc["variant"] = cost::variant_name(variant);
    doc["T"] = segments;
    doc["CLS"] = cls;
    doc["stages"] = graph.stages;
    doc["macs_g"] = r.macs_g();
    doc["params_m"] = r.params_m();
    json per_stage = json::array();
    for (const cost::StageCost& s : r.per_stage) {
      json e;
      e["stage"] = s.stage;
      e["macs_g"] = static_cast<double>(s.macs) * 1e-9;
      e["params_m"] = static_cast<double>(s.params) * 1e-6;
      per_stage.push_back(std::move(e));
    }
    doc["per_stage"] = std::move(per_stage);
    if (variant != cost::Variant::Tsn) {
      const cost::CostReport base = cost::count_cost(
          cost::build_backbone(backbone, cost::Variant::Tsn, segments, cls, stages));
      const bool have_top1 = args.has("base-top1") && args.has("variant-top1");
      const double b1 = args.number("base-top1", 0.0);
      const double v1 = args.number("variant-top1", 0.0);
      const cost::DeltaReport d = cost::delta_report(base, r, b1, v1);
      json deltas;
      deltas["vs"] = "tsn";
      deltas["dmacs_g"] = d.dmacs * 1e-9;
      deltas["dmacs_pct"] = d.dmacs_pct;
      deltas["dparams_m"] = d.dparams * 1e-6;
      if (have_top1) {
        deltas["dtop1"] = d.dtop1;
        doc["deltas"] = std::move(deltas);
        doc["eta"] = cost::efficiency(d.dmacs_pct, d.dtop1);
      } else {
        doc["deltas"] = std::move(deltas);
        doc["eta"] = nullptr;
      }
    } else {
      doc["deltas"] = nullptr;
      doc["eta"] = nullptr;
    }
  }

  const std::string text = doc.dump(2) + "\n";
  std::cout << text;
  if (args.has("out")) {
    const fs::path dir = args.str("out", "");
    fs::create_directories(dir);
    io::write_text_file(dir / "cost.json", text);
    write_snapshot(dir, "cost", args);
  }
  return 0;
}

int cmd_gradcheck(ArgMap& args) {
  const std::uint64_t seed = args.seed();
  const auto items = run_gradcheck_suite(seed);
  bool ok = true;
  double worst = 0.0;
  for (const GradCheckItem& item : items) {
    std::printf("%-28s %12.3e  %s\n", item.name.c_str(), item.max_rel_err,
                item.pass() ? "ok" : "FAIL");
    worst = std::max(worst, item.max_rel_err);
    ok = ok && item.pass();
  }
  std::printf("%zu checks, worst rel err %.3e (%s)\n", items.size(), worst,
              ok ? "all below 1e-4" : "FAILURES above 1e-4");
  if (args.has("out")) {
    const fs::path dir = args.str("out", "");
    fs::create_directories(dir);
    json doc;
    doc["worst_rel_err"] = worst;
    doc["pass"] = ok;
    json arr = json::array();
    for (const GradCheckItem& item : items) {
      arr.push_back({{"op", item.name}, {"max_rel_err", item.max_rel_err}});
    }
    doc["checks"] = std::move(arr);
    io::write_text_file(dir / "gradcheck.json", doc.dump(2) + "\n");
    write_snapshot(dir, "gradcheck", args);
  }
  return ok ? 0 : 1;
}

int cmd_synth(ArgMap& args) {
  const fs::path out = args.required("out");
  const std::size_t n_train = static_cast<std::size_t>(args.integer("n-train", 50));
  const std::size_t n_val = static_cast<std::size_t>(args.integer("n-val", 20));
  const std::size_t frames = static_cast<std::size_t>(args.integer("frames", 40));
  const std::size_t height = static_cast<std::size_t>(args.integer("height", 32));
  const std::size_t width = static_cast<std::size_t>(args.integer("width", 32));
  const double noise = args.number("noise", 0.03);
  const std::uint64_t seed = args.seed();

  const ClipDataset train =
      gen_direction_dataset(n_train, frames, height, width, noise, Rng::mix(seed, 101), "train");
  const ClipDataset val =
      gen_direction_dataset(n_val, frames, height, width, noise, Rng::mix(seed, 202), "val");
  fs::create_directories(out);
  save_dataset(out, train, val);
  write_snapshot(out, "synth", args);
  std::printf("wrote %zu train / %zu val videos (%zu classes) to %s\n",
              train.videos.size(), val.videos.size(), train.class_names.size(),
              out.string().c_str());
  return 0;
}

std::array<bool, 3> parse_toy_stages(const std::string& spec) {
  std::array<bool, 3> stages{false, false, false};
  for (const std::string& tok : split_csv(spec)) {
    if (tok == "1" || tok == "2" || tok == "3") {
      stages[static_cast<std::size_t>(tok[0] - '1')] = true;
    } else {
      throw UsageError("--stages for train expects a subset of 1,2,3");
    }
  }
  return stages;
}

int cmd_train(ArgMap& args) {
  const fs::path data_dir = args.required("data");
  const fs::path out = args.required("out");
  const ToyModule module = parse_toy_module(args.str("module", "action"));
  const std::array<bool, 3> stages = parse_toy_stages(args.str("stages", "1,2,3"));
  const int epochs = static_cast<int>(args.integer("epochs", 30));
  const double lr = args.number("lr", 0.1);
  const std::string decay_spec = args.str("decay", "");
  const std::size_t batch = static_cast<std::size_t>(args.integer("batch", 12));
  const std::size_t segments = static_cast<std::size_t>(args.integer("segments", 8));
  const std::uint64_t seed = args.seed();
  const std::string widths_spec = args.str("widths", "16,32,64");

  DatasetPair data = load_dataset(data_dir);

  ToyNetConfig cfg;
  cfg.module = module;
  cfg.module_stages = stages;
  cfg.classes = data.train.class_names.size();
  {
    const auto toks = split_csv(widths_spec);
    if (toks.size() != 3) throw UsageError("--widths expects three comma-separated values");
    for (std::size_t i = 0; i < 3; ++i) {
      cfg.widths[i] = static_cast<std::size_t>(std::stol(toks[i]));
    }
  }

  TrainConfig tc;
  tc.segments = segments;
  tc.epochs = epochs;
  tc.batch = batch;
  tc.lr = lr;
  tc.seed = seed;
  if (!decay_spec.empty()) {
    for (const std::string& tok : split_csv(decay_spec)) {
      tc.decay_epochs.push_back(static_cast<int>(std::stol(tok)));
    }
  } else {
    for (int candidate : {(epochs * 7) / 8, epochs - 1}) {
      if (candidate >= 1 && candidate < epochs &&
          (tc.decay_epochs.empty() || candidate > tc.decay_epochs.back())) {
        tc.decay_epochs.push_back(candidate);
      }
    }
  }

  ToyNet net(cfg, seed);
  const auto history = train_toynet(net, data.train, tc);
  const EvalResult val = evaluate_toynet(net, data.val, segments);

  fs::create_directories(out);
  io::write_text_file(out / "history.csv", history_csv(history));
  net.save(out / "weights");
  json summary;
  summary["module"] = toy_module_name(module);
  summary["epochs"] = epochs;
  summary["train_top1"] = history.back().top1;
  summary["val_top1"] = val.top1;
  summary["val_top5"] = val.top5;
  summary["parameters"] = net.parameter_count();
  io::write_text_file(out / "eval.json", summary.dump(2) + "\n");
  write_snapshot(out, "train", args);
  std::printf("module=%s epochs=%d train_top1=%.1f val_top1=%.1f val_top5=%.1f\n",
              toy_module_name(module).c_str(), epochs, history.back().top1, val.top1,
              val.top5);
  return 0;
}

int cmd_eval(ArgMap& args) {
  const fs::path data_dir = args.required("data");
  const fs::path weights = args.required("weights");
  const std::size_t segments = static_cast<std::size_t>(args.integer("segments", 8));
  args.seed();

  DatasetPair data = load_dataset(data_dir);
  ToyNet net = ToyNet::load(weights);
  const EvalResult r = evaluate_toynet(net, data.val, segments);
  json doc;
  doc["split"] = "val";
  doc["top1"] = r.top1;
  doc["top5"] = r.top5;
  const std::string text = doc.dump(2) + "\n";
  std::cout << text;
  if (args.has("out")) {
    const fs::path dir = args.str("out", "");
    fs::create_directories(dir);
    io::write_text_file(dir / "eval.json", text);
    write_snapshot(dir, "eval", args);
  }
  return 0;
}

int cmd_cam(ArgMap& args) {
  const fs::path data_dir = args.required("data");
  const fs::path weights = args.required("weights");
  const fs::path out = args.required("out");
  const std::size_t clip_idx = static_cast<std::size_t>(args.integer("clip", 0));
  const std::size_t segments = static_cast<std::size_t>(args.integer("segments", 8));
  args.seed();

  DatasetPair data = load_dataset(data_dir);
  if (clip_idx >= data.val.videos.size()) {
    throw DataError("--clip index " + std::to_string(clip_idx) + " out of range (val has " +
                    std::to_string(data.val.videos.size()) + " clips)");
  }
  const SyntheticVideo& video = data.val.videos[clip_idx];
  const std::size_t cls = static_cast<std::size_t>(
      args.integer("label", static_cast<long>(video.label)));

  ToyNet net = ToyNet::load(weights);
  Rng rng(0);
  const Tensor<float> clip = sample_clip(video, segments, SampleMode::Center, rng);
  const Tensor<float> raw = cam_heatmaps(net, clip, cls);
  const Tensor<float> norm = normalize_heatmaps(raw);

  fs::create_directories(out);
  io::write_atnz(out / "cam_raw.atnz", raw);
  const std::size_t hf = raw.shape()[1];
  const std::size_t wf = raw.shape()[2];
  json frames = json::array();
  for (std::size_t t = 0; t < raw.shape()[0]; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02zu.pgm", t);
    Tensor<float> img({hf, wf});
    std::copy(norm.data() + t * hf * wf, norm.data() + (t + 1) * hf * wf, img.data());
    io::write_pgm(out / name, img);
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < hf * wf; ++i) {
      if (raw[t * hf * wf + i] > raw[t * hf * wf + argmax]) argmax = i;
    }
    json f;
    f["file"] = name;
    f["argmax_y"] = argmax / wf;
    f["argmax_x"] = argmax % wf;
    frames.push_back(std::move(f));
  }
  json doc;
  doc["clip"] = clip_idx;
  doc["true_label"] = video.label;
  doc["cam_class"] = cls;
  doc["feature_shape"] = {raw.shape()[0], hf, wf};
  doc["frames"] = std::move(frames);
  io::write_text_file(out / "cam.json", doc.dump(2) + "\n");
  write_snapshot(out, "cam", args);
  std::printf("wrote %zu heatmap frames to %s\n", raw.shape()[0], out.string().c_str());
  return 0;
}

const std::map<std::string, std::set<std::string>>& allowed_options() {
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"gradcheck", {"seed", "out", "config"}},
      {"cost",
       {"backbone", "variant", "segments", "cls", "stages", "table3", "base-top1",
        "variant-top1", "seed", "out", "config"}},
      {"synth",
       {"out", "n-train", "n-val", "frames", "height", "width", "noise", "seed", "config"}},
      {"train",
       {"data", "out", "module", "stages", "widths", "epochs", "lr", "decay", "batch",
        "segments", "seed", "config"}},
      {"eval", {"data", "weights", "segments", "seed", "out", "config"}},
      {"cam", {"data", "weights", "out", "clip", "label", "segments", "seed", "config"}},
  };
  return allowed;
}

const std::set<std::string> kBooleanFlags = {"table3", "help"};

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
      std::cout << kUsage;
      return args.empty() ? 2 : 0;
    }
    const std::string command = args[0];
    if (!command_usage().count(command)) {
      throw UsageError("unknown command '" + command + "'");
    }

    std::map<std::string, std::string> cli_values;
    bool want_help = false;
    for (std::size_t i = 1; i < args.size(); ++i) {
      std::string key = args[i];
      if (key == "-T") {
        key = "--segments";
      }
      if (key.rfind("--", 0) != 0) {
        throw UsageError("unexpected argument '" + args[i] + "'");
      }
      key = key.substr(2);
      if (key == "help") {
        want_help = true;
        continue;
      }
      if (kBooleanFlags.count(key)) {
        cli_values[key] = "true";
        continue;
      }
      if (i + 1 >= args.size()) {
        throw UsageError("option --" + key + " expects a value");
      }
      cli_values[key] = args[++i];
    }
    if (want_help) {
      std::cout << command_usage().at(command);
      return 0;
    }

    // file values first, command-line flags override
    std::map<std::string, std::string> merged;
    if (cli_values.count("config")) {
      merged = io::parse_kv_file(cli_values.at("config"));
      merged.erase("command");
    }
    for (const auto& [k, v] : cli_values) merged[k] = v;

    ArgMap arg_map(std::move(merged), allowed_options().at(command));
    if (command == "gradcheck") return cmd_gradcheck(arg_map);
    if (command == "cost") return cmd_cost(arg_map);
    if (command == "synth") return cmd_synth(arg_map);
    if (command == "train") return cmd_train(arg_map);
    if (command == "eval") return cmd_eval(arg_map);
    if (command == "cam") return cmd_cam(arg_map);
    throw UsageError("unknown command '" + command + "'");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << kUsage;
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace actionkit::cli
