#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "deeplight/error.hpp"
#include "deeplight/training.hpp"
#include "toy.hpp"

using namespace deeplight;
namespace tr = deeplight::train;
using tr::Dataset; using tr::TrainConfig; using tr::TrainReport; 

TEST_CASE("dropout masks") {
  Rng rng(1);
  const auto ones = tr::dropout_mask(0.0, {50}, rng);
  for (double v : ones.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(tr::dropout_mask(1.0, {3}, rng), ConfigError);
  CHECK_THROWS_AS(tr::dropout_mask(-0.1, {3}, rng), ConfigError);

  for (double p : {0.3, 0.5}) {
    const auto m = tr::dropout_mask(p, {10000}, rng);
    double mean = 0.0;
    for (double v : m.data()) {
      CHECK((v == 0.0 || std::abs(v - 1.0 / (1.0 - p)) < 1e-12));
      mean += v * 3.0;
    }
    mean /= 10000.0;
    CHECK(std::abs(mean - 3.0) / 3.0 <= 0.02);
  }
}

TEST_CASE("dropout schedule") {
  TrainConfig c;
  CHECK(c.dropout_rate(1) == 0.3);
  CHECK(c.dropout_rate(3) == 0.4);
  CHECK(c.dropout_rate(5) == 0.5);
  CHECK(c.dropout_rate(10) == 0.5);
  CHECK(c.dropout_rate(42) == 0.5);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("separable toy set is fit perfectly") {
  const auto ds = toy::quadrants(40, 1);
  const auto init = model::init_params(toy::small_arch(6, 6), 1);
  const auto res = tr::train(ds, {}, init, toy::fast_config(60));
  CHECK(tr::evaluate(res.params, ds).accuracy == 1.0);
  CHECK(res.report.epochs.size() == res.report.stopping_epoch);
}

TEST_CASE("first epoch lowers the training loss") {
  double before = 0.0, after = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ds = toy::quadrants(40, seed);
    const auto init = model::init_params(toy::small_arch(6, 6), seed);
    auto cfg = toy::fast_config(1);
    cfg.seed = seed;
    before += tr::evaluate(init, ds).loss;
    after += tr::evaluate(tr::train(ds, {}, init, cfg).params, ds).loss;
  }
  CHECK(after < before);
}

TEST_CASE("zero epochs leaves the decoder at chance") {
  const auto ds = toy::quadrants(200, 3);
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto init = model::init_params(toy::small_arch(6, 6), seed);
    const auto res = tr::train(ds, {}, init, toy::fast_config(0));
    CHECK(res.params.params == init.params);
    mean += tr::evaluate(res.params, ds).accuracy / 10.0;
  }
  CHECK(std::abs(mean - 0.25) <= 0.1);
}

TEST_CASE("training is deterministic") {
  const auto ds = toy::quadrants(40, 4);
  const auto val = toy::quadrants(16, 5);
  const auto init = model::init_params(toy::small_arch(6, 6), 4);
  auto cfg = toy::fast_config(5);
  cfg.dropout = {0.3, 0.3, 0.5, 0.5};
  const auto a = tr::train(ds, val, init, cfg);
  const auto b = tr::train(ds, val, init, cfg);
  CHECK(a.report == b.report);
  CHECK(a.params.params == b.params.params);
  CHECK(a.report.epochs.size() == 5);
}

TEST_CASE("an unreachable clipping threshold matches an unclipped run") {
  const auto ds = toy::quadrants(40, 6);
  const auto init = model::init_params(toy::small_arch(6, 6), 6);
  auto a_cfg = toy::fast_config(3);
  a_cfg.clip_threshold = std::numeric_limits<double>::infinity();
  auto b_cfg = a_cfg;
  b_cfg.clip_threshold = 1e300;
  CHECK(tr::train(ds, {}, init, a_cfg).params.params == tr::train(ds, {}, init, b_cfg).params.params);
}

TEST_CASE("early stopping keeps the best epoch") {
  const auto ds = toy::quadrants(40, 7);
  const auto val = toy::quadrants(20, 8, 0.0, 1.0);
  const auto init = model::init_params(toy::small_arch(6, 6), 7);
  auto cfg = toy::fast_config(60);
  cfg.patience = 2;
  const auto res = tr::train(ds, val, init, cfg);
  CHECK(res.report.stopping_epoch < 60);
  CHECK(res.report.epochs.size() == res.report.stopping_epoch);
  CHECK(res.report.stopping_epoch - res.report.best_epoch == 2);
  CHECK(tr::evaluate(res.params, val).accuracy == doctest::Approx(res.report.epochs[res.report.best_epoch - 1].val_acc));
}

TEST_CASE("missing classes are rejected") {
  auto ds = toy::quadrants(40, 9);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples[i].label != 2) keep.push_back(i);
  }
  const auto init = model::init_params(toy::small_arch(6, 6), 9);
  CHECK_THROWS_AS(tr::train(ds.subset(keep), {}, init, toy::fast_config(1)), InputError);
  CHECK_THROWS_AS(tr::evaluate(init, Dataset{}), InputError);
}

TEST_CASE("confusion matrix bookkeeping") {
  const auto ds = toy::quadrants(60, 10);
  const auto init = model::init_params(toy::small_arch(6, 6), 10);
  const auto res = tr::train(ds, {}, init, toy::fast_config(3));
  const auto ev = tr::evaluate(res.params, ds);
  std::size_t trace = 0, total = 0;
  for (std::size_t t = 0; t < 4; ++t) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < 4; ++p) row += ev.confusion[t][p];
    CHECK(row == 15);
    trace += ev.confusion[t][t];
    total += row;
  }
  CHECK(static_cast<double>(trace) / static_cast<double>(total) == ev.accuracy);
}

TEST_CASE("a perfect decoder has a diagonal confusion matrix") {
  const auto ds = toy::quadrants(40, 1);
  const auto res = tr::train(ds, {}, model::init_params(toy::small_arch(6, 6), 1), toy::fast_config(60));
  const auto ev = tr::evaluate(res.params, ds);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t p = 0; p < 4; ++p) CHECK(ev.confusion[t][p] == (t == p ? 10u : 0u));
}

TEST_CASE("a constant predictor gives a flat block-time curve at the base rate") {
  auto ds = toy::quadrants(34 * 4, 11);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds.samples[i].label = static_cast<int>(i / 34);
    ds.samples[i].block_offset = static_cast<int>(i % 34);
  }
  auto p = model::init_params(toy::small_arch(6, 6), 11);
  p.params.at("out.w").fill(0.0);
  p.params.at("out.b") = nn::Tensor({4}, {0.0, 0.0, 1.0, 0.0});
  const auto curve = tr::accuracy_by_block_time(p, ds);
  REQUIRE(curve.size() == 34);
  for (const auto& o : curve) {
    CHECK(o.total == 4);
    CHECK(o.accuracy() == 0.25);
  }
}

TEST_CASE("block-time accuracy needs task TRs") {
  auto ds = toy::quadrants(8, 12);
  for (auto& s : ds.samples) s.block_offset = -1;
  CHECK_THROWS_AS(tr::accuracy_by_block_time(model::init_params(toy::small_arch(6, 6), 1), ds), InputError);
}

TEST_CASE("training report CSV") {
  TrainReport r;
  r.epochs.push_back({1, 1.5, 0.25, 1.25, 0.5});
  r.stopping_epoch = 1;
  std::ostringstream o;
  tr::write_report_csv(o, r);
  CHECK(o.str().rfind("epoch,train_loss,train_acc,val_loss,val_acc\n1,", 0) == 0);
}
