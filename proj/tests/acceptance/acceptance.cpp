// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deeplight/baselines.hpp"
#include "deeplight/brainmaps.hpp"
#include "deeplight/config.hpp"
#include "deeplight/kernels.hpp"
#include "deeplight/lrp.hpp"
#include "deeplight/pipeline.hpp"
#include "oracles.hpp"
#include "unit/toy.hpp"

using namespace deeplight;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

nn::Tensor random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  nn::Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

Volume3D random_volume(GridShape g, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Volume3D v(g, 2.0);
  for (double& x : v.data) x = d(rng);
  return v;
}

// ------------------------------------------------------------------ 1

void gradient_check() {
  const auto t0 = Clock::now();
  model::ArchSpec arch;
  arch.slice_x = 8;
  arch.slice_y = 7;
  arch.conv = {{4, 2}, {4, 1}};
  arch.lstm_units = 8;
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto p = model::init_params(arch, seed);
    for (std::size_t i = 0; i < p.params.size(); ++i) {
      const auto& n = p.params.name(i);
      if (n.ends_with(".b") || n.find(".b_") != std::string::npos) p.params[i] = random_tensor(p.params[i].shape(), rng, 0.1);
    }
    const auto seq = model::slice_volume(random_volume({8, 7, 4}, rng));
    const std::size_t label = seed % 4;
    auto loss = [&](nn::Tape& tape) {
      const auto tr = model::forward(tape, p, seq);
      return tape.softmax_cross_entropy(tr.logits, label);
    };
    nn::Tape tape;
    const auto l = loss(tape);
    const auto pattern = tape.relu_pattern();
    const auto g = nn::reverse_gradient(tape, l, p.params);
    for (std::size_t k = 0; k < p.params.size(); ++k) {
      for (std::size_t i = 0; i < p.params[k].size(); ++i) {
        bool kink = false;
        auto f = [&] {
          nn::Tape t(false);
          const auto v = loss(t);
          kink = kink || t.relu_pattern() != pattern;
          return t.value(v)[0];
        };
        const double num = oracle::central_difference(f, p.params[k][i], 1e-5);
        if (kink) {
          ++kinks;
          continue;
        }
        const double ana = g[k][i];
        worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-4 && secs < 120.0,
         fmt("max relative gradient error %.2e over %zu parameters x 5 seeds (%zu kink crossings skipped), %.1f s",
             worst, checked / 5, kinks, secs));
}

// ------------------------------------------------------------------ 2

void conservation() {
  double worst_chain = 0.0, worst_model = 0.0, gate_total = 0.0;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    // dense chain 9 -> 6 -> 4 -> 3 and a conv chain, all bias free
    const nn::Tensor a = random_tensor({9}, rng);
    const nn::Tensor w1 = random_tensor({6, 9}, rng), w2 = random_tensor({4, 6}, rng), w3 = random_tensor({3, 4}, rng);
    const auto h1 = nn::linear(w1, a, nn::Tensor({6})), h2 = nn::linear(w2, h1, nn::Tensor({4}));
    const auto out = nn::linear(w3, h2, nn::Tensor({3}));
    nn::Tensor seed({3});
    seed[0] = out[0];
    auto r = lrp::lrp_dense(w3, h2, nn::Tensor({3}), seed, 0.0);
    r = lrp::lrp_dense(w2, h1, nn::Tensor({4}), r, 0.0);
    r = lrp::lrp_dense(w1, a, nn::Tensor({6}), r, 0.0);
    double s = 0.0;
    for (double v : r.data()) s += v;
    worst_chain = std::max(worst_chain, std::abs(s - out[0]) / std::abs(out[0]));

    const nn::Tensor x = random_tensor({1, 6, 5, 1}, rng), k = random_tensor({3, 3, 1, 3}, rng);
    const auto z = nn::conv2d(x, k, nn::Tensor({3}), 1 + trial % 2);
    const auto rc = lrp::lrp_conv(x, k, z, z, 1 + trial % 2, 0.0);
    double sz = 0.0, sr = 0.0;
    for (double v : z.data()) sz += v;
    for (double v : rc.data()) sr += v;
    worst_chain = std::max(worst_chain, std::abs(sr - sz) / std::abs(sz));

    // whole decoder, bias free: sum of input relevance equals the target logit
    auto p = model::init_params(toy::small_arch(6, 5, 4), 100 + trial);
    for (std::size_t i = 0; i < p.params.size(); ++i) {
      const auto& n = p.params.name(i);
      if (n.ends_with(".b") || n.find(".b_") != std::string::npos) p.params[i].fill(0.0);
    }
    const auto seq = model::slice_volume(random_volume({6, 5, 3}, rng));
    const auto rel = lrp::relevance_for(p, seq, trial % 4, {0.0});
    double total = 0.0;
    for (double v : rel.relevance.data) total += v;
    worst_model = std::max(worst_model, std::abs(total - rel.fa) / std::abs(rel.fa));

    // random LSTM with biases: nothing flows into the gates
    auto q = model::init_params(toy::small_arch(5, 5, 6), 500 + trial);
    for (std::size_t i = 0; i < q.params.size(); ++i) {
      if (q.params.name(i).find(".b") != std::string::npos) q.params[i] = random_tensor(q.params[i].shape(), rng, 0.5);
    }
    gate_total += lrp::relevance_for(q, model::slice_volume(random_volume({5, 5, 4}, rng)), trial % 4).gate_relevance;
  }
  report(2, worst_chain <= 1e-9 && worst_model <= 1e-9 && gate_total == 0.0,
         fmt("max relative conservation error %.2e (chains), %.2e (bias-free decoder); gate relevance %g over 100 "
             "LSTM decompositions",
             worst_chain, worst_model, gate_total));
}

// ------------------------------------------------------------------ 3

void planted_signal() {
  double worst = 1.0;
  std::string per;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto ds = toy::planted(400, seed);
    auto cfg = toy::fast_config(60);
    cfg.dropout = {0.3, 0.3, 0.4, 0.4, 0.5};
    cfg.seed = seed;
    const auto res = train::train(ds, {}, model::init_params(toy::small_arch(6, 6), seed), cfg);
    const double share = toy::slice1_share(res.params, ds, 1);
    worst = std::min(worst, share);
    per += fmt("%s%.3f", seed > 1 ? ", " : "", share);
  }
  report(3, worst >= 0.95, "share of absolute relevance on the informative slice per seed: " + per);
}

// ------------------------------------------------------------------ 4-6

double mean_over(const std::map<int, double>& by_offset, int lo, int hi) {
  double s = 0.0;
  int n = 0;
  for (const auto& [o, v] : by_offset) {
    if (o >= lo && o <= hi) {
      s += v;
      ++n;
    }
  }
  return n ? s / n : std::nan("");
}

void phantom_experiment(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const auto raw = pipeline::from_phantom(cfg.phantom, phantom::generate_phantom(cfg.phantom));
  const auto st = pipeline::preprocess_study(raw, cfg.preprocess);
  auto train_ids = st.subject_ids(false);
  const std::vector<std::size_t> val_ids(train_ids.end() - static_cast<long>(cfg.validation_subjects), train_ids.end());
  train_ids.resize(train_ids.size() - cfg.validation_subjects);
  const auto test_ids = st.subject_ids(true);
  const auto arch = model::ArchSpec::deeplight(st.grid.x, st.grid.y);
  const auto fit = pipeline::fit_decoder(pipeline::make_dataset(st, train_ids), pipeline::make_dataset(st, val_ids),
                                         arch, cfg.seed, cfg.train, cfg.init_restarts);
  const auto& result = fit.result;
  const double train_s = seconds_since(t0);

  const auto ds = pipeline::make_dataset(st, test_ids);
  const auto ev = train::evaluate(result.params, ds);
  std::size_t win = 0, win_ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (lrp::in_window(ds.samples[i].block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s)) {
      ++win;
      win_ok += ev.predicted[i] == ds.samples[i].label;
    }
  }
  const double win_acc = static_cast<double>(win_ok) / static_cast<double>(win);
  report(4, win_acc >= 0.85 && train_s <= 1800.0,
         fmt("window test accuracy %.3f on %zu TRs (overall %.3f); grid %zux%zux%zu, %zu epochs (init attempt %zu), %.0f s on %d thread(s)",
             win_acc, win, ev.accuracy, st.grid.x, st.grid.y, st.grid.z, result.report.stopping_epoch, fit.attempt + 1, train_s,
             std::max(1, std::atoi(std::getenv("DEEPLIGHT_THREADS") ? std::getenv("DEEPLIGHT_THREADS") : "1"))));

  const auto course = pipeline::timecourse_blocks(st, ds, cfg.maps.timecourse_run - 1);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (course[i] || lrp::in_window(ds.samples[i].block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s)) {
      idx.push_back(i);
    }
  }
  const auto attr = pipeline::attribute(result.params, ds, idx, cfg.lrp);
  std::vector<pipeline::Attribution> window_attr;
  std::vector<maps::TimedVolume> timed;
  for (const auto& a : attr) {
    const auto& s = ds.samples[a.sample];
    if (a.relevance.status != lrp::Status::decomposed) continue;
    if (lrp::in_window(s.block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s)) window_attr.push_back(a);
    if (course[a.sample]) timed.push_back({s.subject, s.label, s.block_offset, a.relevance.relevance});
  }
  const auto group = pipeline::deeplight_group_maps(ds, window_attr, cfg.maps.fwhm_mm);
  const auto scores = pipeline::score_maps(st, group, cfg.maps.percentile);
  bool all_ok = true;
  std::string per;
  for (const auto& s : scores) {
    all_ok = all_ok && !s.empty && s.f1 >= 0.4;
    per += fmt("%s%s %.3f", per.empty() ? "" : ", ", model::kStateNames[static_cast<std::size_t>(s.state)], s.f1);
  }
  report(5, all_ok, "group relevance map F1 at the 90th percentile: " + per);

  std::map<int, double> acc_by, f1_by;
  for (const auto& o : train::accuracy_by_block_time(ev, ds)) {
    if (o.total) acc_by[o.offset] = o.accuracy();
  }
  const auto tps = maps::time_resolved_maps(timed, st.targets, cfg.maps.percentile, cfg.maps.fwhm_mm);
  std::size_t skipped = 0;
  for (const auto& tp : tps) {
    if (tp.skipped) {
      ++skipped;
    } else {
      f1_by[tp.offset] = tp.mean_f1;
    }
  }
  const double acc_early = mean_over(acc_by, 0, 3), acc_late = mean_over(acc_by, 7, 20);
  const double f1_early = mean_over(f1_by, 0, 3), f1_late = mean_over(f1_by, 7, 20);
  report(6, acc_late - acc_early >= 0.15 && f1_late - f1_early >= 0.1,
         fmt("accuracy TRs 7-20 %.3f vs 0-3 %.3f (diff %.3f); time-resolved F1 %.3f vs %.3f (diff %.3f, %zu TRs "
             "skipped)",
             acc_late, acc_early, acc_late - acc_early, f1_late, f1_early, f1_late - f1_early, skipped));
}

// ------------------------------------------------------------------ 7

phantom::PhantomSpec small_phantom() {
  phantom::PhantomSpec s;
  s.grid = {12, 14, 6};
  s.rois = {{
      {{3.0, 3.5, 2.5}, {2.5, 2.5, 2.0}},
      {{8.5, 3.5, 2.5}, {2.5, 2.5, 2.0}},
      {{3.0, 10.0, 2.5}, {2.5, 2.5, 2.0}},
      {{8.5, 10.0, 2.5}, {2.5, 2.5, 2.0}},
  }};
  s.train_subjects = 2;
  s.test_subjects = 1;
  return s;
}

void baseline_sanity(const RunConfig& cfg) {
  std::vector<std::string> notes;
  bool ok = true;

  // (a) full-batch lasso along a 10-point grid
  {
    const auto spec = small_phantom();
    const auto st = pipeline::preprocess_study(pipeline::from_phantom(spec, phantom::generate_phantom(spec)), {});
    const auto x = pipeline::subject_samples(st, 0);
    const double lmax = baselines::lasso_lambda_max(x);
    std::vector<double> lambdas;
    for (int i = 0; i < 10; ++i) lambdas.push_back(lmax * std::pow(10.0, -0.25 * i));
    const auto path = baselines::lasso_path(x, lambdas);
    bool mono = path.front().nonzeros() == 0;
    std::string counts;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i && path[i].nonzeros() < path[i - 1].nonzeros()) mono = false;
      counts += fmt("%s%zu", i ? " " : "", path[i].nonzeros());
    }
    ok = ok && mono;
    notes.push_back(fmt("(a) nonzeros from largest lambda: %s %s", counts.c_str(), mono ? "ok" : "NOT monotone"));
  }

  // (b) sphere size and searchlight peak on the default phantom
  {
    const auto offs = baselines::sphere_offsets(5.6, 2.0);
    std::size_t brute = 0;
    for (int i = -3; i <= 3; ++i)
      for (int j = -3; j <= 3; ++j)
        for (int k = -3; k <= 3; ++k) brute += 4.0 * (i * i + j * j + k * k) <= 5.6 * 5.6;
    const auto st = pipeline::preprocess_study(
        pipeline::from_phantom(cfg.phantom, phantom::generate_phantom(cfg.phantom)), cfg.preprocess);
    const auto train_b = pipeline::beta_samples(pipeline::glm_group(st, st.subject_ids(false)));
    const auto test_b = pipeline::beta_samples(pipeline::glm_group(st, st.subject_ids(true)));
    const std::vector<char> mask = st.mask.empty() ? std::vector<char>(st.grid.voxels(), 1) : st.mask;
    const auto sl = baselines::searchlight(train_b, test_b, st.grid, mask, st.voxel_mm, cfg.searchlight);
    const auto peak = static_cast<std::size_t>(std::max_element(sl.accuracy.data.begin(), sl.accuracy.data.end()) -
                                               sl.accuracy.data.begin());
    const GridShape g = st.grid;
    const long pi = static_cast<long>(peak % g.x), pj = static_cast<long>((peak / g.x) % g.y),
               pk = static_cast<long>(peak / (g.x * g.y));
    const double r = cfg.searchlight.radius_mm / st.voxel_mm;
    bool near = false;
    for (std::size_t v = 0; v < g.voxels() && !near; ++v) {
      bool in_roi = false;
      for (const auto& t : st.targets) in_roi = in_roi || t[v];
      if (!in_roi) continue;
      const long i = static_cast<long>(v % g.x), j = static_cast<long>((v / g.x) % g.y),
                 k = static_cast<long>(v / (g.x * g.y));
      near = std::hypot(double(i - pi), double(j - pj), double(k - pk)) <= r;
    }
    const bool pass = offs.size() == 81 && brute == 81 && near;
    ok = ok && pass;
    notes.push_back(fmt("(b) %zu sphere offsets (brute force %zu); peak accuracy %.3f at (%ld,%ld,%ld) %s", offs.size(),
                        brute, sl.accuracy.data[peak], pi, pj, pk,
                        near ? "inside the dilated ROIs" : "OUTSIDE the dilated ROIs"));
  }

  // (c) noiseless GLM recovery on the default grid
  {
    auto spec = cfg.phantom;
    spec.noise_sigma = 0.0;
    const auto subj = phantom::generate_subject(spec, 0);
    const auto x = baselines::make_design(subj.design);
    const std::size_t n = spec.grid.voxels();
    baselines::Matrix y(x.x.rows, n);
    std::size_t row = 0;
    for (const auto& run : subj.runs)
      for (std::size_t t = 0; t < run.timepoints; ++t, ++row)
        for (std::size_t v = 0; v < n; ++v) y(row, v) = run.data[t * n + v];
    const auto fit = baselines::glm_fit(y, x);
    const auto labels = phantom::roi_labels(spec.grid, subj.rois);
    double err = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t s = 0; s < 4; ++s) {
        err = std::max(err, std::abs(fit.beta(s, v) - (labels[v] == static_cast<int>(s) ? 1.0 : 0.0)));
      }
    ok = ok && err <= 1e-6;
    notes.push_back(fmt("(c) sigma=0 GLM max beta error %.2e", err));
  }

  // (d) BH and F1 against brute force
  {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 15);
    std::bernoulli_distribution coin(0.5);
    std::size_t bh_bad = 0, f1_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> p(static_cast<std::size_t>(len(rng)));
      for (double& v : p) v = std::pow(u(rng), 3.0);
      const double rate = 0.01 + 0.2 * u(rng);
      bh_bad += maps::threshold_fdr(p, rate).keep != oracle::bh(p, rate);
      std::vector<char> s(p.size()), t(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        s[i] = coin(rng);
        t[i] = coin(rng);
      }
      f1_bad += maps::f1_similarity(s, t).f1 != oracle::f1(s, t);
    }
    ok = ok && bh_bad == 0 && f1_bad == 0;
    notes.push_back(fmt("(d) mismatches over 1000 instances: BH %zu, F1 %zu", bh_bad, f1_bad));
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  report(7, ok, detail);
}

// ------------------------------------------------------------------ 8

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

void determinism(const std::string& cli, const std::string& config) {
  const fs::path work = fs::temp_directory_path() / fmt("deeplight_acceptance_%d", static_cast<int>(std::random_device{}()));
  const std::vector<std::string> steps{
      "phantom --out {o}/ph",
      "preprocess --in {o}/ph --out {o}/pp",
      "train --data {o}/pp --out {o}/tr",
      "evaluate --data {o}/pp --model {o}/tr/model.dlp --out {o}/ev",
      "attribute --data {o}/pp --model {o}/tr/model.dlp --out {o}/at",
      "maps --data {o}/pp --in {o}/at --out {o}/mp",
      "glm --data {o}/pp --out {o}/glm",
      "searchlight --data {o}/pp --out {o}/sl",
      "lasso --data {o}/pp --out {o}/la --final-epochs 3",
      "report --in {o}/ev {o}/mp {o}/glm {o}/sl {o}/la --out {o}/rep",
  };
  bool ok = true;
  std::string failed;
  std::size_t files = 0;
  for (const char* tag : {"a", "b"}) {
    const std::string o = (work / tag).string();
    for (auto s : steps) {
      for (std::size_t p; (p = s.find("{o}")) != std::string::npos;) s.replace(p, 3, o);
      const std::string sub = s.substr(0, s.find(' '));
      const std::string with_config = sub == "report" ? "" : " --config " + config;
      const std::string cmd = cli + " " + sub + with_config + s.substr(sub.size()) + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        failed += " " + sub;
      }
    }
  }
  std::size_t differ = 0;
  if (ok) {
    const auto a = snapshot(work / "a"), b = snapshot(work / "b");
    files = a.size();
    if (a.size() != b.size()) ok = false;
    for (const auto& [k, v] : a) {
      const auto it = b.find(k);
      if (it == b.end() || it->second != v) ++differ;
    }
    ok = ok && differ == 0 && files > 0;
  }
  fs::remove_all(work);
  report(8, ok,
         failed.empty() ? fmt("%zu artifacts from %zu commands compared across two runs, %zu differ", files, steps.size(), differ)
                        : "commands failed:" + failed);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : DEEPLIGHT_CLI;
  const std::string small = argc > 2 ? argv[2] : DEEPLIGHT_SMALL_CONFIG;
  const std::string phantom_cfg = argc > 3 ? argv[3] : DEEPLIGHT_PHANTOM_CONFIG;
  const auto cfg = load_config(phantom_cfg);

  gradient_check();
  conservation();
  planted_signal();
  phantom_experiment(cfg);
  baseline_sanity(cfg);
  determinism(cli, small);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
