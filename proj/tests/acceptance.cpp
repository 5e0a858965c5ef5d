// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL] line;
// training-based criteria share one experiment lab so nets are trained once
// and reused.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "actionkit/cli.hpp"
#include "actionkit/cost_model.hpp"
#include "actionkit/excitation.hpp"
#include "actionkit/parallel.hpp"
#include "actionkit/synth_data.hpp"
#include "actionkit/toynet.hpp"
#include "actionkit/verification.hpp"
#include "test_util.hpp"

using namespace actionkit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
}

bool within(double value, double target, double rel_tol) {
  return std::abs(value - target) <= rel_tol * std::abs(target);
}

// ---------------------------------------------------------------------------
// Shared training lab for criteria 8-10
// ---------------------------------------------------------------------------

struct RunKey {
  ToyModule module = ToyModule::None;
  std::array<bool, 3> stages{true, true, true};
  std::uint64_t seed = 1;

  std::string name() const {
    std::string s = toy_module_name(module) + "_s";
    for (int i = 0; i < 3; ++i) s += stages[static_cast<std::size_t>(i)] ? std::to_string(i + 1) : "";
    s += "_" + std::to_string(seed);
    return s;
  }
  bool operator<(const RunKey& o) const { return name() < o.name(); }
};

struct RunOut {
  double val_top1 = 0;
  fs::path weights;
};

TrainConfig lab_train_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.segments = 8;
  tc.epochs = 30;
  tc.batch = 16;
  tc.lr = 0.1;
  tc.decay_epochs = {26, 29};
  tc.seed = seed;
  return tc;
}

class Lab {
 public:
  static Lab& get() {
    static Lab lab;
    return lab;
  }

  const DatasetPair& data() {
    ensure_data();
    return data_;
  }

  // Trains (or reuses) every requested run; jobs execute two at a time with
  // inner parallelism pinned to one thread.
  void run_batch(const std::vector<RunKey>& keys) {
    ensure_data();
    std::vector<RunKey> todo;
    for (const RunKey& k : keys) {
      if (!results_.count(k)) todo.push_back(k);
    }
    if (todo.empty()) return;

    const int prev_budget = thread_budget();
    set_thread_budget(1);
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        RunKey key{};
        {
          std::lock_guard<std::mutex> lk(mu);
          if (next >= todo.size()) return;
          key = todo[next++];
        }
        RunOut out = train_one(key);
        {
          std::lock_guard<std::mutex> lk(mu);
          results_[key] = out;
        }
      }
    };
    const unsigned hw = std::thread::hardware_concurrency();
    if (hw >= 2 && todo.size() > 1) {
      std::thread other(worker);
      worker();
      other.join();
    } else {
      worker();
    }
    set_thread_budget(prev_budget);
  }

  RunOut run(const RunKey& key) {
    run_batch({key});
    return results_.at(key);
  }

 private:
  Lab() {
    dir_ = fs::temp_directory_path() / "actionkit_acceptance_lab";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  void ensure_data() {
    if (!data_.train.videos.empty()) return;
    data_.train = gen_direction_dataset(50, 40, 32, 32, 0.02, Rng::mix(77, 101), "train");
    data_.val = gen_direction_dataset(20, 40, 32, 32, 0.02, Rng::mix(77, 202), "val");
  }

  RunOut train_one(const RunKey& key) {
    ToyNetConfig cfg;
    cfg.module = key.module;
    cfg.module_stages = key.stages;
    ToyNet net(cfg, key.seed);
    train_toynet(net, data_.train, lab_train_config(key.seed));
    const EvalResult r = evaluate_toynet(net, data_.val, 8);
    RunOut out;
    out.val_top1 = r.top1;
    out.weights = dir_ / key.name();
    net.save(out.weights);
    return out;
  }

  fs::path dir_;
  DatasetPair data_;
  std::map<RunKey, RunOut> results_;
};

}  // namespace

// ---------------------------------------------------------------------------
// criterion 1: ResNet-50 complexity reproduction
// ---------------------------------------------------------------------------

TEST_CASE("criterion 1: resnet-50 cost reproduction") {
  const auto t0 = Clock::now();
  using namespace actionkit::cost;
  const CostReport tsn = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {}));
  const CostReport tsm = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsm, 8, 83, {}));
  const CostReport act = count_cost(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {}));
  const double elapsed = seconds_since(t0);

  const bool base_macs = within(tsn.macs_g(), 33.0, 0.03);
  const bool base_params = within(tsn.params_m(), 23.68, 0.02);
  const bool act_macs = within(act.macs_g(), 34.75, 0.04);
  const bool act_params = within(act.params_m(), 28.08, 0.10);
  const bool tsm_exact = tsm.macs == tsn.macs && tsm.params == tsn.params;
  const bool fast = elapsed < 1.0;
  CHECK(base_macs);
  CHECK(base_params);
  CHECK(act_macs);
  CHECK(act_params);
  CHECK(tsm_exact);
  CHECK(fast);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "tsn %.2fG/%.2fM (33G/23.68M), action %.2fG/%.2fM (34.75G/28.08M), "
                "tsm==tsn %s, %.3fs",
                tsn.macs_g(), tsn.params_m(), act.macs_g(), act.params_m(),
                tsm_exact ? "yes" : "NO", elapsed);
  report(1, base_macs && base_params && act_macs && act_params && tsm_exact && fast, buf);
}

// ---------------------------------------------------------------------------
// criterion 2: per-path deltas
// ---------------------------------------------------------------------------

TEST_CASE("criterion 2: per-path compute and parameter deltas") {
  using namespace actionkit::cost;
  const CostReport tsn = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {}));
  const CostReport ste = count_cost(build_backbone(Backbone::ResNet50, Variant::Ste, 8, 83, {}));
  const CostReport ce = count_cost(build_backbone(Backbone::ResNet50, Variant::Ce, 8, 83, {}));
  const CostReport me = count_cost(build_backbone(Backbone::ResNet50, Variant::Me, 8, 83, {}));
  const CostReport act = count_cost(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {}));

  const bool ordering = ste.macs > tsn.macs && ste.macs < ce.macs && ce.macs < me.macs &&
                        me.macs < act.macs;
  const double me_dflops_g = me.macs_g() - tsn.macs_g();
  const bool me_flops = within(me_dflops_g, 1.69, 0.40);
  const double ce_dparams_m = ce.params_m() - tsn.params_m();
  const bool ce_params = within(ce_dparams_m, 2.40, 0.15);
  const double me_dparams_m = me.params_m() - tsn.params_m();
  const bool me_params = within(me_dparams_m, 2.22, 0.15);
  CHECK(ordering);
  CHECK(me_flops);
  CHECK(ce_params);
  CHECK(me_params);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "dFLOPs ste %.3fG < ce %.3fG < me %.3fG < action %.3fG; me dF %.2fG "
                "(1.69G +-40%%), ce dP %.2fM (2.40M +-15%%), me dP %.2fM (2.22M +-15%%)",
                ste.macs_g() - tsn.macs_g(), ce.macs_g() - tsn.macs_g(), me_dflops_g,
                act.macs_g() - tsn.macs_g(), me_dflops_g, ce_dparams_m, me_dparams_m);
  report(2, ordering && me_flops && ce_params && me_params, buf);
}

// ---------------------------------------------------------------------------
// criterion 3: MobileNet V2 complexity reproduction
// ---------------------------------------------------------------------------

TEST_CASE("criterion 3: mobilenet v2 cost reproduction") {
  using namespace actionkit::cost;
  const CostReport tsn =
      count_cost(build_backbone(Backbone::MobileNetV2, Variant::Tsn, 8, 83, {}));
  const CostReport act =
      count_cost(build_backbone(Backbone::MobileNetV2, Variant::Action, 8, 83, {}));

  const bool base_macs = within(tsn.macs_g(), 2.55, 0.05);
  const bool base_params = within(tsn.params_m(), 2.33, 0.05);
  const bool act_macs = within(act.macs_g(), 2.57, 0.05);
  const bool act_params = within(act.params_m(), 2.36, 0.10);
  const double dpct = 100.0 * (act.macs_g() - tsn.macs_g()) / tsn.macs_g();
  const bool dflops_band = dpct >= 0.5 && dpct <= 1.2;
  CHECK(base_macs);
  CHECK(base_params);
  CHECK(act_macs);
  CHECK(act_params);
  CHECK(dflops_band);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "tsm-baseline %.3fG/%.3fM (2.55G/2.33M), action %.3fG/%.3fM "
                "(2.57G/2.36M), dFLOPs %.2f%% in [0.5, 1.2]",
                tsn.macs_g(), tsn.params_m(), act.macs_g(), act.params_m(), dpct);
  report(3, base_macs && base_params && act_macs && act_params && dflops_band, buf);
}

// ---------------------------------------------------------------------------
// criterion 4: efficiency metric arithmetic
// ---------------------------------------------------------------------------

TEST_CASE("criterion 4: efficiency metric reproduces the published values") {
  using actionkit::cost::efficiency;
  // published EgoGesture deltas: (dFLOPs%, dTop-1 vs the shift baseline)
  struct Case {
    double dflops_pct, dtop1, expected;
  };
  const Case cases[] = {
      {0.3, 93.8 - 92.1, 0.18},                          // spatio-temporal path
      {0.5, 93.8 - 92.1, 0.29},                          // channel path
      {5.1, 93.9 - 92.1, 2.83},                          // motion path
      {5.3, 94.2 - 92.1, 2.52},                          // full module
      {100.0 * (2.57 - 2.55) / 2.55, 93.5 - 92.4, 0.71}  // mobilenet v2
  };
  bool all = true;
  for (const Case& c : cases) {
    const double eta = efficiency(c.dflops_pct, c.dtop1);
    const bool ok = std::abs(eta - c.expected) <= 0.02;
    CHECK(ok);
    all = all && ok;
  }
  report(4, all, "eta arithmetic matches 0.18 / 0.29 / 2.83 / 2.52 / 0.71 within 0.02");
}

// ---------------------------------------------------------------------------
// criterion 5: gradient suite
// ---------------------------------------------------------------------------

TEST_CASE("criterion 5: finite-difference gradient suite") {
  const auto t0 = Clock::now();
  const auto items = run_gradcheck_suite(2024);
  const double elapsed = seconds_since(t0);
  double worst = 0;
  bool all = true;
  for (const GradCheckItem& item : items) {
    worst = std::max(worst, item.max_rel_err);
    if (!item.pass()) {
      all = false;
      MESSAGE("gradcheck failure: " << item.name << " " << item.max_rel_err);
    }
  }
  const bool fast = elapsed < 120.0;
  CHECK(all);
  CHECK(fast);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu checks, worst rel err %.2e (< 1e-4), %.1fs (< 120s)",
                items.size(), worst, elapsed);
  report(5, all && fast, buf);
}

// ---------------------------------------------------------------------------
// criterion 6: equation semantics against straight-line oracles
// ---------------------------------------------------------------------------

TEST_CASE("criterion 6: path forwards match the loop oracles") {
  Rng rng(606);
  bool all = true;
  double worst = 0;
  struct Cfg {
    std::size_t n, t, c, h, w;
  };
  const Cfg cfgs[] = {{1, 2, 2, 1, 1}, {1, 3, 2, 2, 2}, {2, 4, 6, 3, 3},
                      {1, 1, 3, 2, 2}, {1, 2, 16, 2, 2}, {2, 3, 17, 3, 2}};
  for (const Cfg& cfg : cfgs) {
    const std::size_t red = reduced_channels(cfg.c);
    Tensor<double> x = testutil::randn<double>({cfg.n, cfg.t, cfg.c, cfg.h, cfg.w}, rng);
    testutil::SteRef ste{testutil::randn<double>({1, 1, 3, 3, 3}, rng, 0.5),
                         testutil::randn<double>({1}, rng, 0.2)};
    testutil::CeRef ce{testutil::randn<double>({red, cfg.c, 1, 1}, rng, 0.5),
                       testutil::randn<double>({red}, rng, 0.2),
                       testutil::randn<double>({red, red, 3}, rng, 0.5),
                       testutil::randn<double>({red}, rng, 0.2),
                       testutil::randn<double>({cfg.c, red, 1, 1}, rng, 0.5),
                       testutil::randn<double>({cfg.c}, rng, 0.2)};
    testutil::MeRef me{testutil::randn<double>({red, cfg.c, 1, 1}, rng, 0.5),
                       testutil::randn<double>({red}, rng, 0.2),
                       testutil::randn<double>({red, 1, 3, 3}, rng, 0.5),
                       testutil::randn<double>({red}, rng, 0.2),
                       testutil::randn<double>({cfg.c, red, 1, 1}, rng, 0.5),
                       testutil::randn<double>({cfg.c}, rng, 0.2)};

    Tape<double> t;
    Var<double> xv = t.constant(Tensor<double>(x));
    SteVars<double> sv{t.constant(Tensor<double>(ste.kernel)),
                       t.constant(Tensor<double>(ste.bias))};
    CeVars<double> cv{t.constant(Tensor<double>(ce.k1)), t.constant(Tensor<double>(ce.b1)),
                      t.constant(Tensor<double>(ce.k2)), t.constant(Tensor<double>(ce.b2)),
                      t.constant(Tensor<double>(ce.k3)), t.constant(Tensor<double>(ce.b3))};
    MeVars<double> mv{t.constant(Tensor<double>(me.k1)), t.constant(Tensor<double>(me.b1)),
                      t.constant(Tensor<double>(me.kd)), t.constant(Tensor<double>(me.bd)),
                      t.constant(Tensor<double>(me.k3)), t.constant(Tensor<double>(me.b3))};
    const double e1 =
        testutil::max_rel_err(t.value(ste_forward(t, xv, sv)), testutil::ref_ste(x, ste), 1e-9);
    const double e2 =
        testutil::max_rel_err(t.value(ce_forward(t, xv, cv)), testutil::ref_ce(x, ce), 1e-9);
    const double e3 =
        testutil::max_rel_err(t.value(me_forward(t, xv, mv)), testutil::ref_me(x, me), 1e-9);
    worst = std::max({worst, e1, e2, e3});
    all = all && e1 < 1e-10 && e2 < 1e-10 && e3 < 1e-10;
    CHECK(e1 < 1e-10);
    CHECK(e2 < 1e-10);
    CHECK(e3 < 1e-10);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "ste/ce/me vs straight-line oracles over %zu shapes, worst rel %.2e (< 1e-10)",
                std::size(cfgs), worst);
  report(6, all, buf);
}

// ---------------------------------------------------------------------------
// criterion 7: property suite
// ---------------------------------------------------------------------------

TEST_CASE("criterion 7: module property suite") {
  Rng rng(707);
  bool all = true;

  // shape preservation + residual bounds (mask strictly inside (0,1))
  {
    const std::size_t n = 2, t = 4, c = 18, h = 5, w = 4;
    Tensor<double> x = testutil::randn<double>({n, t, c, h, w}, rng);
    const std::size_t red = reduced_channels(c);
    Tape<double> tape;
    Var<double> xv = tape.constant(Tensor<double>(x));
    ActionVars<double> av{
        {tape.constant(testutil::randn<double>({1, 1, 3, 3, 3}, rng, 0.4)),
         tape.constant(testutil::randn<double>({1}, rng, 0.2))},
        {tape.constant(testutil::randn<double>({red, c, 1, 1}, rng, 0.4)),
         tape.constant(testutil::randn<double>({red}, rng, 0.2)),
         tape.constant(testutil::randn<double>({red, red, 3}, rng, 0.4)),
         tape.constant(testutil::randn<double>({red}, rng, 0.2)),
         tape.constant(testutil::randn<double>({c, red, 1, 1}, rng, 0.4)),
         tape.constant(testutil::randn<double>({c}, rng, 0.2))},
        {tape.constant(testutil::randn<double>({red, c, 1, 1}, rng, 0.4)),
         tape.constant(testutil::randn<double>({red}, rng, 0.2)),
         tape.constant(testutil::randn<double>({red, 1, 3, 3}, rng, 0.4)),
         tape.constant(testutil::randn<double>({red}, rng, 0.2)),
         tape.constant(testutil::randn<double>({c, red, 1, 1}, rng, 0.4)),
         tape.constant(testutil::randn<double>({c}, rng, 0.2))}};
    for (auto path : {0, 1, 2}) {
      Var<double> y = path == 0   ? ste_forward(tape, xv, av.ste)
                      : path == 1 ? ce_forward(tape, xv, av.ce)
                                  : me_forward(tape, xv, av.me);
      const Tensor<double>& yv = tape.value(y);
      bool ok = yv.shape() == x.shape();
      for (std::size_t i = 0; i < yv.size() && ok; ++i) {
        ok = yv[i] * x[i] >= 0.0 && std::abs(yv[i]) >= std::abs(x[i]) &&
             std::abs(yv[i]) <= 2.0 * std::abs(x[i]);
        if (std::abs(x[i]) > 1e-9) {
          ok = ok && std::abs(yv[i]) > std::abs(x[i]) &&
               std::abs(yv[i]) < 2.0 * std::abs(x[i]);
        }
      }
      CHECK(ok);
      all = all && ok;
    }
    Var<double> sum = action_forward(tape, xv, av);
    const bool shape_ok = tape.value(sum).shape() == x.shape();
    CHECK(shape_ok);
    all = all && shape_ok;
  }

  // spatio-temporal path: channel-permutation equivariance
  {
    const std::size_t c = 6, hw = 6;
    Tensor<double> x = testutil::randn<double>({1, 3, c, 2, 3}, rng);
    testutil::SteRef w{testutil::randn<double>({1, 1, 3, 3, 3}, rng, 0.5),
                       testutil::randn<double>({1}, rng, 0.2)};
    Tape<double> t1;
    SteVars<double> sv1{t1.constant(Tensor<double>(w.kernel)),
                        t1.constant(Tensor<double>(w.bias))};
    Tensor<double> lib = t1.value(ste_forward(t1, t1.constant(Tensor<double>(x)), sv1));

    std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
    Tensor<double> px(x.shape());
    for (std::size_t nt = 0; nt < 3; ++nt)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < hw; ++p)
          px[(nt * c + ci) * hw + p] = x[(nt * c + perm[ci]) * hw + p];
    Tape<double> t2;
    SteVars<double> sv2{t2.constant(Tensor<double>(w.kernel)),
                        t2.constant(Tensor<double>(w.bias))};
    Tensor<double> pout = t2.value(ste_forward(t2, t2.constant(Tensor<double>(px)), sv2));
    bool ok = true;
    for (std::size_t nt = 0; nt < 3 && ok; ++nt)
      for (std::size_t ci = 0; ci < c && ok; ++ci)
        for (std::size_t p = 0; p < hw && ok; ++p) {
          const double want = lib[(nt * c + perm[ci]) * hw + p];
          const double got = pout[(nt * c + ci) * hw + p];
          const double denom = std::max({1e-9, std::abs(want), std::abs(got)});
          ok = std::abs(want - got) / denom < 1e-11;
        }
    CHECK(ok);
    all = all && ok;
  }

  // batch independence, exact
  {
    Rng wr(7071);
    ActionWeights<double> aw = ActionWeights<double>::init(5, wr);
    Tensor<double> x = testutil::randn<double>({3, 2, 5, 2, 2}, rng);
    Tape<double> tb;
    Tensor<double> batched =
        tb.value(action_forward(tb, tb.constant(Tensor<double>(x)), lift(tb, aw)));
    const std::size_t sample = x.size() / 3;
    bool ok = true;
    for (std::size_t ni = 0; ni < 3; ++ni) {
      Tensor<double> one({1, 2, 5, 2, 2});
      std::copy(x.data() + ni * sample, x.data() + (ni + 1) * sample, one.data());
      Tape<double> ts;
      Tensor<double> single =
          ts.value(action_forward(ts, ts.constant(std::move(one)), lift(ts, aw)));
      for (std::size_t i = 0; i < sample && ok; ++i) {
        ok = single[i] == batched[ni * sample + i];
      }
    }
    CHECK(ok);
    all = all && ok;
  }

  // reversed-input sensitivity of the combined module
  {
    Rng wr(7072);
    ActionWeights<double> aw = ActionWeights<double>::init(6, wr);
    Tensor<double> x = testutil::randn<double>({1, 5, 6, 3, 3}, rng);
    Tensor<double> rx(x.shape());
    const std::size_t rest = x.size() / 5;
    for (std::size_t t = 0; t < 5; ++t) {
      std::copy(x.data() + (4 - t) * rest, x.data() + (5 - t) * rest, rx.data() + t * rest);
    }
    Tape<double> ta, tb2;
    Tensor<double> fwd =
        ta.value(action_forward(ta, ta.constant(Tensor<double>(x)), lift(ta, aw)));
    Tensor<double> rev =
        tb2.value(action_forward(tb2, tb2.constant(Tensor<double>(rx)), lift(tb2, aw)));
    double diff = 0;
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t i = 0; i < rest; ++i) {
        diff = std::max(diff, std::abs(rev[t * rest + i] - fwd[(4 - t) * rest + i]));
      }
    }
    const bool ok = diff > 1e-6;
    CHECK(ok);
    all = all && ok;
  }

  // exact permutation invariance of a temporally blind classifier
  {
    ToyNet net({.module = ToyModule::None}, 7073);
    Rng cr(7074);
    Tensor<float> clips = testutil::randn<float>({2, 8, 1, 32, 32}, cr);
    Tensor<float> base = toynet_logits(net, clips);
    bool ok = true;
    for (int rep = 0; rep < 3 && ok; ++rep) {
      std::vector<std::size_t> perm(8);
      for (std::size_t i = 0; i < 8; ++i) perm[i] = i;
      for (std::size_t i = 8; i > 1; --i) std::swap(perm[i - 1], perm[cr.uniform_index(i)]);
      Tensor<float> shuffled(clips.shape());
      const std::size_t rest = clips.size() / (2 * 8);
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t t = 0; t < 8; ++t) {
          std::copy(clips.data() + (n * 8 + perm[t]) * rest,
                    clips.data() + (n * 8 + perm[t] + 1) * rest,
                    shuffled.data() + (n * 8 + t) * rest);
        }
      ok = testutil::bit_equal(base, toynet_logits(net, shuffled));
    }
    CHECK(ok);
    all = all && ok;
  }

  report(7, all,
         "mask range, shape preservation, channel-permutation equivariance, batch "
         "independence, reversal sensitivity, blind-baseline invariance");
}

// ---------------------------------------------------------------------------
// criterion 8: temporal-separation experiment
// ---------------------------------------------------------------------------

TEST_CASE("criterion 8: temporal-separation experiment") {
  const std::array<bool, 3> all_stages{true, true, true};
  const std::uint64_t seeds[] = {1, 2, 3};

  std::vector<RunKey> jobs;
  for (const std::uint64_t s : seeds) {
    for (const ToyModule m : {ToyModule::Action, ToyModule::Shift, ToyModule::None}) {
      jobs.push_back({m, all_stages, s});
    }
  }
  const auto t0 = Clock::now();
  Lab::get().run_batch(jobs);
  const double elapsed = seconds_since(t0);

  bool gap_ok = true;
  int between = 0;
  std::string detail;
  for (const std::uint64_t s : seeds) {
    const double act = Lab::get().run({ToyModule::Action, all_stages, s}).val_top1;
    const double shf = Lab::get().run({ToyModule::Shift, all_stages, s}).val_top1;
    const double non = Lab::get().run({ToyModule::None, all_stages, s}).val_top1;
    gap_ok = gap_ok && act >= 90.0 && non <= 60.0;
    if (non < shf && shf < act) ++between;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "seed %llu none %.1f / shift %.1f / action %.1f; ",
                  static_cast<unsigned long long>(s), non, shf, act);
    detail += buf;
  }
  const bool between_ok = between >= 2;
  const bool time_ok = elapsed < 600.0;
  CHECK(gap_ok);
  CHECK(between_ok);
  CHECK(time_ok);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "strictly-between on %d/3 seeds, %.0fs (< 600s)",
                between, elapsed);
  report(8, gap_ok && between_ok && time_ok, detail + buf);
}

// ---------------------------------------------------------------------------
// criterion 9: insertion-stage monotonicity
// ---------------------------------------------------------------------------

TEST_CASE("criterion 9: insertion-stage monotonicity") {
  const std::uint64_t seed = 1;
  const std::vector<std::array<bool, 3>> nested = {
      {true, false, false}, {true, true, false}, {true, true, true}};
  std::vector<RunKey> jobs;
  for (const auto& stages : nested) jobs.push_back({ToyModule::Action, stages, seed});
  Lab::get().run_batch(jobs);

  std::vector<double> acc;
  for (const auto& stages : nested) {
    acc.push_back(Lab::get().run({ToyModule::Action, stages, seed}).val_top1);
  }
  const bool ok = acc[1] >= acc[0] - 2.0 && acc[2] >= acc[1] - 2.0;
  CHECK(ok);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "action val top-1 over nested stage sets {1} %.1f, {1,2} %.1f, {1,2,3} "
                "%.1f (drops <= 2 points)",
                acc[0], acc[1], acc[2]);
  report(9, ok, buf);
}

// ---------------------------------------------------------------------------
// criterion 10: class activation maps track the moving blob
// ---------------------------------------------------------------------------

TEST_CASE("criterion 10: cam heatmaps track the blob") {
  const RunKey key{ToyModule::Action, {true, true, true}, 1};
  const RunOut run = Lab::get().run(key);
  ToyNet net = ToyNet::load(run.weights);
  const DatasetPair& data = Lab::get().data();

  std::size_t hits = 0, frames = 0;
  for (std::size_t clip_idx = 0; clip_idx < 10; ++clip_idx) {
    const SyntheticVideo& video = data.val.videos[clip_idx];
    Rng rng(0);
    const auto idx = tsn_sample_indices(video.frames.shape()[0], 8, SampleMode::Center, rng);
    const Tensor<float> clip = sample_clip(video, 8, SampleMode::Center, rng);
    const Tensor<float> heat =
        cam_heatmaps(net, clip, static_cast<std::size_t>(video.label));
    const std::size_t hf = heat.shape()[1];
    const std::size_t wf = heat.shape()[2];
    const double scale = 32.0 / static_cast<double>(wf);
    for (std::size_t t = 0; t < 8; ++t) {
      std::size_t argmax = 0;
      for (std::size_t p = 1; p < hf * wf; ++p) {
        if (heat[t * hf * wf + p] > heat[t * hf * wf + argmax]) argmax = p;
      }
      const double ay = static_cast<double>(argmax / wf);
      const double ax = static_cast<double>(argmax % wf);
      const auto center = blob_center(video.meta, idx[t], video.frames.shape()[0]);
      const double by = center[0] / scale;
      const double bx = center[1] / scale;
      const double dist = std::hypot(ay - by, ax - bx);
      ++frames;
      if (dist <= 5.0) ++hits;
    }
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(frames);
  const bool ok = frac >= 0.70;
  CHECK(ok);
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "max-activation within 5 feature pixels of the blob on %zu/%zu frames "
                "(%.0f%%, need >= 70%%)",
                hits, frames, 100.0 * frac);
  report(10, ok, buf);
}
