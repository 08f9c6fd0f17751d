#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "../oracles.hpp"
#include "deeplight/autodiff.hpp"
#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"
#include "deeplight/optim.hpp"

using namespace deeplight;
using namespace deeplight::nn;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double sd = 1.0) {
  Tensor t(std::move(s));
  std::normal_distribution<double> d(0.0, sd);
  for (double& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("conv2d identity case") {
  const Tensor out = conv2d(Tensor({1, 1, 1}, {2.0}), Tensor({1, 1, 1, 1}, {1.0}), Tensor({1}), 1);
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out[0] == 2.0);
}

TEST_CASE("conv2d all-ones 3x3 gives 9 at the center and 4 at corners") {
  const Tensor out = conv2d(Tensor({3, 3, 1}, 1.0), Tensor({3, 3, 1, 1}, 1.0), Tensor({1}), 1);
  CHECK(out[4] == 9.0);
  CHECK(out[0] == 4.0);
  CHECK(out[2] == 4.0);
  CHECK(out[6] == 4.0);
  CHECK(out[8] == 4.0);
  CHECK(out[1] == 6.0);
}

TEST_CASE("same extents under stride 2") {
  std::size_t w = 74;
  const std::size_t expect[] = {37, 19, 10, 5};
  for (std::size_t e : expect) {
    w = same_extent(w, 2);
    CHECK(w == e);
  }
  const Tensor out = conv2d(Tensor({74, 92, 1}, 1.0), Tensor({3, 3, 1, 2}, 0.5), Tensor({2}), 2);
  CHECK(out.shape() == Shape{37, 46, 2});
}

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(7);
  for (std::size_t stride : {1u, 2u}) {
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 7}, {8, 6}, {1, 4}, {9, 9}}) {
      const Tensor in = random_tensor({h, w, 3}, rng);
      const Tensor k = random_tensor({3, 3, 3, 4}, rng);
      const Tensor b = random_tensor({4}, rng);
      const Tensor got = conv2d(in, k, b, stride);
      const Tensor want = oracle::conv2d(in, k, b, stride);
      REQUIRE(got.shape() == want.shape());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("batched conv2d equals per-image conv2d") {
  std::mt19937_64 rng(8);
  const Tensor batch = random_tensor({3, 6, 5, 2}, rng);
  const Tensor k = random_tensor({3, 3, 2, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor out = conv2d(batch, k, b, 2);
  REQUIRE(out.shape() == Shape{3, 3, 3, 3});
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor img({6, 5, 2});
    std::copy_n(batch.raw() + n * 60, 60, img.raw());
    const Tensor want = oracle::conv2d(img, k, b, 2);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(out[n * 27 + i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor({7, 6, 2}, rng), bb = random_tensor({7, 6, 2}, rng);
  const Tensor k = random_tensor({3, 3, 2, 3}, rng);
  const Tensor zero({3});
  const double alpha = 1.7, beta = -0.4;
  Tensor mix = a;
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a[i] + beta * bb[i];
  const Tensor lhs = conv2d(mix, k, zero, 1);
  const Tensor ca = conv2d(a, k, zero, 1), cb = conv2d(bb, k, zero, 1);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (alpha * ca[i] + beta * cb[i])) <= 1e-10);
}

TEST_CASE("conv2d rejects inconsistent shapes") {
  CHECK_THROWS_AS(conv2d(Tensor({4, 4, 2}), Tensor({3, 3, 1, 1}), Tensor({1}), 1), ConfigError);
  CHECK_THROWS_AS(conv2d(Tensor({4, 4, 1}), Tensor({2, 2, 1, 1}), Tensor({1}), 1), ConfigError);
  CHECK_THROWS_AS(conv2d(Tensor({4, 4, 1}), Tensor({3, 3, 1, 1}), Tensor({1}), 3), ConfigError);
}

TEST_CASE("activations") {
  CHECK(activate(Activation::relu, Tensor({1}, {-1.5}))[0] == 0.0);
  CHECK(activate(Activation::logistic, Tensor({1}, {0.0}))[0] == 0.5);
  CHECK(activate(Activation::tanh, Tensor({1}, {0.0}))[0] == 0.0);
  const Tensor s = softmax(Tensor({4}, 0.0));
  for (double v : s.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("activation ranges and softmax normalization") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = random_tensor({6}, rng, 5.0);
    const Tensor r = activate(Activation::relu, z), l = activate(Activation::logistic, z),
                 t = activate(Activation::tanh, z);
    for (double v : r.data()) CHECK(v >= 0.0);
    for (double v : l.data()) CHECK((v > 0.0 && v < 1.0));
    for (double v : t.data()) CHECK((v > -1.0 && v < 1.0));
    const Tensor p = softmax(z);
    double sum = 0.0;
    for (double v : p.data()) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    Tensor shifted = z;
    for (double& v : shifted.data()) v += 3.25;
    const Tensor q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
  }
}

TEST_CASE("softmax over the last axis of a matrix") {
  const Tensor p = activate(Activation::softmax, Tensor({2, 3}, {0, 0, 0, 1, 2, 3}));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
  CHECK(p[3] + p[4] + p[5] == doctest::Approx(1.0));
  CHECK(p[0] == doctest::Approx(1.0 / 3));
}

TEST_CASE("gradient of x squared") {
  ParamSet ps;
  ps.add("x", Tensor({1}, {3.0}));
  Tape tape;
  const Var x = tape.param(ps, "x");
  const Var loss = tape.sum(tape.mul(x, x));
  const auto g = reverse_gradient(tape, loss, ps);
  CHECK(g.at("x")[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax cross-entropy gradient at equal logits") {
  ParamSet ps;
  ps.add("z", Tensor({4}, 0.0));
  Tape tape;
  const Var loss = tape.softmax_cross_entropy(tape.param(ps, "z"), 0);
  const auto g = reverse_gradient(tape, loss, ps);
  const double want[] = {-0.75, 0.25, 0.25, 0.25};
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.at("z")[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("non-scalar loss is rejected") {
  ParamSet ps;
  ps.add("x", Tensor({2}, 1.0));
  Tape tape;
  const Var x = tape.param(ps, "x");
  CHECK_THROWS_AS(tape.backward(tape.relu(x)), std::invalid_argument);
}

TEST_CASE("random graphs of every op pass a finite-difference check") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ParamSet ps;
    ps.add("k", random_tensor({3, 3, 2, 3}, rng, 0.5));
    ps.add("kb", random_tensor({3}, rng, 0.1));
    ps.add("w", random_tensor({4, 12}, rng, 0.5));
    ps.add("b", random_tensor({4}, rng, 0.1));
    ps.add("v", random_tensor({4}, rng));
    const Tensor input = random_tensor({4, 4, 2}, rng);
    const Tensor mask = random_tensor({4}, rng);
    auto build = [&](Tape& tape) {
      const Var c = tape.relu(tape.conv2d(tape.constant(input), tape.param(ps, "k"), tape.param(ps, "kb"), 2));
      const Var flat = tape.reshape(c, {12});
      const Var h = tape.linear(tape.param(ps, "w"), flat, tape.param(ps, "b"));
      const Var s = tape.mul(tape.sigmoid(h), tape.tanh(tape.add(h, tape.param(ps, "v"))));
      const Var m = tape.scale(s, mask);
      const Var two = tape.concat(m, tape.row(tape.reshape(s, {2, 2}), 1));
      return tape.softmax_cross_entropy(two, 2);
    };
    Tape tape;
    const Var loss = build(tape);
    const auto pattern = tape.relu_pattern();
    const auto g = reverse_gradient(tape, loss, ps);
    for (std::size_t p = 0; p < ps.size(); ++p) {
      for (std::size_t i = 0; i < ps[p].size(); ++i) {
        bool kink = false;
        auto f = [&] {
          Tape t;
          const Var l = build(t);
          kink = kink || t.relu_pattern() != pattern;
          return t.value(l)[0];
        };
        const double num = oracle::central_difference(f, ps[p][i], 1e-5);
        if (kink) continue;
        const double ana = g[p][i];
        const double denom = std::max({std::abs(ana), std::abs(num), 1e-6});
        CHECK(std::abs(ana - num) / denom <= 1e-4);
      }
    }
  }
}

TEST_CASE("global norm clipping") {
  ParamSet g;
  g.add("a", Tensor({2}, {6.0, 8.0}));
  auto big = g;
  CHECK(clip_global_norm(big, 5.0) == doctest::Approx(10.0));
  CHECK(big.at("a")[0] == doctest::Approx(3.0));
  CHECK(big.at("a")[1] == doctest::Approx(4.0));

  ParamSet small;
  small.add("a", Tensor({2}, {1.8, 2.4}));
  const auto before = small;
  clip_global_norm(small, 5.0);
  CHECK(small == before);

  ParamSet zero;
  zero.add("a", Tensor({3}));
  clip_global_norm(zero, 5.0);
  CHECK(max_abs(zero.at("a")) == 0.0);
}

TEST_CASE("clipped norm is bounded and direction preserved") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    ParamSet g;
    g.add("a", random_tensor({5}, rng, 4.0));
    g.add("b", random_tensor({2, 3}, rng, 4.0));
    const auto orig = g;
    const double thr = 0.5 + trial * 0.1;
    const double n0 = global_norm(orig);
    clip_global_norm(g, thr);
    CHECK(global_norm(g) <= thr + 1e-12);
    const double scale = global_norm(g) / n0;
    for (std::size_t p = 0; p < g.size(); ++p)
      for (std::size_t i = 0; i < g[p].size(); ++i) CHECK(g[p][i] == doctest::Approx(orig[p][i] * scale));
  }
}

TEST_CASE("adam special cases") {
  ParamSet params;
  params.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  const auto start = params;

  SUBCASE("zero gradient leaves a fresh state unchanged") {
    auto st = AdamState::for_params(params);
    adam_step(st, params, params.zeros_like());
    CHECK(params == start);
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    AdamHyper h;
    h.learning_rate = 0.01;
    auto st = AdamState::for_params(params, h);
    ParamSet g;
    g.add("w", Tensor({3}, {0.3, -4.0, 1e-2}));
    adam_step(st, params, g);
    const double sign[] = {1.0, -1.0, 1.0};
    for (std::size_t i = 0; i < 3; ++i) CHECK(params.at("w")[i] - start.at("w")[i] == doctest::Approx(-0.01 * sign[i]).epsilon(1e-5));
  }
  SUBCASE("zero learning rate") {
    AdamHyper h;
    h.learning_rate = 0.0;
    auto st = AdamState::for_params(params, h);
    ParamSet g;
    g.add("w", Tensor({3}, {5.0, -1.0, 2.0}));
    for (int i = 0; i < 3; ++i) adam_step(st, params, g);
    CHECK(params == start);
  }
}
