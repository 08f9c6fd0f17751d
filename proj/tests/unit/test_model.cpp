#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"
#include "deeplight/model.hpp"

using namespace deeplight;
using namespace deeplight::model;
using nn::Shape;
using nn::Tensor;

namespace {

Volume3D random_volume(GridShape g, std::mt19937_64& rng) {
  Volume3D v(g, 2.0);
  std::normal_distribution<double> d;
  for (double& x : v.data) x = d(rng);
  return v;
}

ArchSpec small_arch(std::size_t x, std::size_t y, std::size_t units = 6) {
  ArchSpec a;
  a.slice_x = x;
  a.slice_y = y;
  a.conv = {{4, 2}, {5, 1}};
  a.lstm_units = units;
  return a;
}

std::size_t ceil4(std::size_t n) {
  for (int i = 0; i < 4; ++i) n = (n + 1) / 2;
  return n;
}

}  // namespace

TEST_CASE("slicing a 2x2x1 volume gives the volume itself") {
  Volume3D v({2, 2, 1}, 2.0);
  v.data = {1, 2, 3, 4};
  const auto seq = slice_volume(v);
  REQUIRE(seq.length() == 1);
  const Tensor s = seq.slice(0);
  CHECK(s.shape() == Shape{2, 2, 1});
  CHECK(s[0 * 2 + 0] == 1.0);
  CHECK(s[1 * 2 + 0] == 2.0);
  CHECK(s[0 * 2 + 1] == 3.0);
}

TEST_CASE("slice k is the axial plane z = k and restacking is exact") {
  std::mt19937_64 rng(1);
  const auto v = random_volume({5, 4, 6}, rng);
  const auto seq = slice_volume(v);
  REQUIRE(seq.length() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    const Tensor s = seq.slice(k);
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) CHECK(s[x * 4 + y] == v.at(x, y, k));
  }
  const auto back = restack(seq, 2.0);
  CHECK(back.shape == v.shape);
  CHECK(back.data == v.data);
}

TEST_CASE("full-size volume yields 81 slices of 74x92") {
  const Volume3D v({74, 92, 81}, 2.0);
  const auto seq = slice_volume(v);
  CHECK(seq.length() == 81);
  CHECK(seq.slice(0).shape() == Shape{74, 92, 1});
}

TEST_CASE("empty volume is rejected") { CHECK_THROWS_AS(slice_volume(Volume3D({0, 0, 0}, 2.0)), InputError); }

TEST_CASE("feature dimensions") {
  CHECK(ArchSpec::deeplight(74, 92).feature_dim() == 960);
  CHECK(ArchSpec::deeplight(24, 28).feature_dim() == 128);
  for (std::size_t x = 3; x <= 40; ++x)
    for (std::size_t y = 3; y <= 40; y += 3) CHECK(ArchSpec::deeplight(x, y).feature_dim() == ceil4(x) * ceil4(y) * 32);
  const auto p = init_params(ArchSpec::deeplight(24, 28), 3);
  std::mt19937_64 rng(2);
  const auto v = random_volume({24, 28, 1}, rng);
  CHECK(feature_extract(slice_volume(v).slice(0), p).size() == 128);
}

TEST_CASE("all-zero slice with zero biases gives zero features") {
  const auto p = init_params(ArchSpec::deeplight(24, 28), 3);
  const Tensor f = feature_extract(Tensor({24, 28, 1}), p);
  CHECK(nn::max_abs(f) == 0.0);
}

TEST_CASE("slices below 3x3 are rejected") { CHECK_THROWS_AS(init_params(ArchSpec::deeplight(2, 5), 1), InputError); }

TEST_CASE("lstm step with zero weights") {
  auto arch = small_arch(6, 6, 3);
  auto p = init_params(arch, 1);
  for (std::size_t i = 0; i < p.params.size(); ++i) p.params[i].fill(0.0);
  const Tensor a({arch.feature_dim()}, 0.7);
  auto r = lstm_step(a, zero_state(3), p.params, Direction::forward);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(r.forget[u] == 0.5);
    CHECK(r.input[u] == 0.5);
    CHECK(r.output_gate[u] == 0.5);
    CHECK(r.candidate[u] == 0.0);
    CHECK(r.state.cell[u] == 0.0);
    CHECK(r.state.hidden[u] == 0.0);
  }
  LstmState prev = zero_state(3);
  prev.cell = Tensor({3}, {1.0, -2.0, 0.4});
  r = lstm_step(a, prev, p.params, Direction::backward);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(r.state.cell[u] == doctest::Approx(0.5 * prev.cell[u]));
    CHECK(r.state.hidden[u] == doctest::Approx(0.5 * std::tanh(0.5 * prev.cell[u])));
  }
}

TEST_CASE("lstm step matches a scalar-loop oracle") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  auto arch = small_arch(6, 6, 3);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = init_params(arch, 10 + trial);
    for (std::size_t i = 0; i < p.params.size(); ++i)
      for (double& v : p.params[i].data()) v = d(rng);
    Tensor a({arch.feature_dim()});
    for (double& v : a.data()) v = d(rng);
    LstmState prev{Tensor({3}), Tensor({3})};
    for (std::size_t u = 0; u < 3; ++u) {
      prev.cell[u] = d(rng);
      prev.hidden[u] = std::tanh(d(rng));
    }
    const auto got = lstm_step(a, prev, p.params, Direction::forward);
    std::vector<const Tensor*> w, b;
    for (const char* g : {"f", "i", "c", "o"}) {
      w.push_back(&p.params.at(std::string("lstm_fwd.W_") + g));
      b.push_back(&p.params.at(std::string("lstm_fwd.b_") + g));
    }
    const auto want = oracle::lstm_step({a.data().begin(), a.data().end()},
                                        {prev.hidden.data().begin(), prev.hidden.data().end()},
                                        {prev.cell.data().begin(), prev.cell.data().end()}, w, b);
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(std::abs(got.state.cell[u] - want.c[u]) <= 1e-12);
      CHECK(std::abs(got.state.hidden[u] - want.h[u]) <= 1e-12);
      CHECK(std::abs(got.state.hidden[u]) < 1.0);
    }
  }
}

TEST_CASE("lstm step rejects mismatched inputs") {
  auto p = init_params(small_arch(6, 6, 3), 1);
  CHECK_THROWS_AS(lstm_step(Tensor({5}), zero_state(3), p.params, Direction::forward), ConfigError);
}

TEST_CASE("zero output weights give a uniform posterior") {
  auto p = init_params(ArchSpec::deeplight(24, 28), 5);
  p.params.at("out.w").fill(0.0);
  std::mt19937_64 rng(5);
  const auto d = decode(random_volume({24, 28, 20}, rng), p);
  for (double v : d.posterior.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("posterior is a probability vector and decoding is deterministic") {
  std::mt19937_64 rng(6);
  const auto p = init_params(small_arch(8, 7), 6);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_volume({8, 7, 4}, rng);
    for (double& x : v.data) x *= 1 + trial;
    const auto a = decode(v, p);
    const auto b = decode(v, p);
    double sum = 0.0;
    for (double x : a.posterior.data()) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(a.logits == b.logits);
  }
}

TEST_CASE("reversing the sequence and swapping directions permutes the joint output") {
  std::mt19937_64 rng(7);
  const auto arch = small_arch(6, 5, 4);
  const auto p = init_params(arch, 7);
  auto swapped = p;
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    const std::string& n = p.params.name(i);
    if (n.rfind("lstm_fwd.", 0) == 0) {
      swapped.params.at("lstm_bwd." + n.substr(9)) = p.params[i];
    } else if (n.rfind("lstm_bwd.", 0) == 0) {
      swapped.params.at("lstm_fwd." + n.substr(9)) = p.params[i];
    }
  }
  const auto v = random_volume({6, 5, 5}, rng);
  Volume3D rev(v.shape, 2.0);
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 6; ++x) rev.at(x, y, k) = v.at(x, y, 4 - k);
  const Tensor a = joint_output(slice_volume(v), p);
  const Tensor b = joint_output(slice_volume(rev), swapped);
  for (std::size_t u = 0; u < 4; ++u) {
    CHECK(std::abs(a[u] - b[4 + u]) <= 1e-12);
    CHECK(std::abs(a[4 + u] - b[u]) <= 1e-12);
  }
}

TEST_CASE("initialization is seeded") {
  const auto arch = ArchSpec::deeplight(24, 28);
  CHECK(init_params(arch, 11).params == init_params(arch, 11).params);
  CHECK_FALSE(init_params(arch, 11).params == init_params(arch, 12).params);
  const auto p = init_params(arch, 11);
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    const auto& n = p.params.name(i);
    const bool bias = n.find(".b") != std::string::npos;
    if (bias) CHECK(nn::max_abs(p.params[i]) == 0.0);
  }
}

TEST_CASE("initial weight variance follows the fan-based target") {
  const auto arch = ArchSpec::deeplight(24, 28);
  for (const std::string name : {"conv1.w", "conv5.w", "lstm_fwd.W_f", "out.w"}) {
    std::vector<double> draws;
    double target = 0.0;
    for (std::uint64_t seed = 1; draws.size() < 10000; ++seed) {
      const auto p = init_params(arch, seed);
      const Tensor& w = p.params.at(name);
      const auto& s = w.shape();
      const std::size_t fan_in = s.size() == 4 ? s[0] * s[1] * s[2] : s[1];
      const std::size_t fan_out = s.size() == 4 ? s[0] * s[1] * s[3] : s[0];
      target = 2.0 / static_cast<double>(fan_in + fan_out);
      draws.insert(draws.end(), w.data().begin(), w.data().end());
    }
    double mean = 0.0, var = 0.0;
    for (double x : draws) mean += x;
    mean /= static_cast<double>(draws.size());
    for (double x : draws) var += (x - mean) * (x - mean);
    var /= static_cast<double>(draws.size() - 1);
    CHECK(std::abs(var / target - 1.0) <= 0.1);
  }
}
