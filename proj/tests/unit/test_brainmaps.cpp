#include <doctest.h>

#include <cmath>
#include <random>

#include "deeplight/brainmaps.hpp"
#include "deeplight/error.hpp"
#include "deeplight/preprocess.hpp"
#include "oracles.hpp"

using namespace deeplight;
using namespace deeplight::maps;

namespace {

Volume3D random_volume(GridShape g, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Volume3D v(g, 2.0);
  for (double& x : v.data) x = d(rng);
  return v;
}

std::vector<char> random_mask(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  std::vector<char> m(n);
  for (auto& v : m) v = b(rng) ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("subject aggregation") {
  std::mt19937_64 rng(1);
  const auto a = random_volume({6, 5, 4}, rng);
  CHECK_FALSE(aggregate_subject({}).has_value());
  const auto one = aggregate_subject({a});
  CHECK(one->data == preprocess::gaussian_smooth(a, 3.0).data);
  const auto same = aggregate_subject({a, a, a}, 0.0);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(same->data[i] == doctest::Approx(a.data[i]).epsilon(1e-14));

  std::vector<Volume3D> all, first, second;
  for (int i = 0; i < 5; ++i) {
    all.push_back(random_volume({6, 5, 4}, rng));
    (i < 2 ? first : second).push_back(all.back());
  }
  const auto m = aggregate_subject(all), m1 = aggregate_subject(first), m2 = aggregate_subject(second);
  for (std::size_t i = 0; i < m->data.size(); ++i) {
    CHECK(m->data[i] == doctest::Approx((2.0 * m1->data[i] + 3.0 * m2->data[i]) / 5.0).epsilon(1e-12));
  }
}

TEST_CASE("group aggregation") {
  std::mt19937_64 rng(2);
  const auto a = random_volume({4, 4, 4}, rng), b = random_volume({4, 4, 4}, rng);
  const auto g = aggregate_group({a, b});
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(g.data[i] == doctest::Approx((a.data[i] + b.data[i]) / 2));
  CHECK(aggregate_group({a}).data == a.data);
  CHECK_THROWS_AS(aggregate_group({}), InputError);
  CHECK_THROWS_AS(aggregate_group({a, Volume3D({4, 4, 3}, 2.0)}), InputError);
}

TEST_CASE("percentile threshold examples") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(percentile(v, 90.0) == doctest::Approx(9.1));
  auto t = threshold_percentile(v, 90.0);
  CHECK(t.count == 1);
  CHECK(t.keep[9] == 1);
  CHECK(threshold_percentile(v, 0.0).count == 10);
  CHECK(threshold_percentile(std::vector<double>(7, 2.5), 90.0).count == 7);
  v = {-1, 0, 3, 1};
  t = threshold_percentile(v, 0.0);
  CHECK(t.count == 2);
  CHECK(t.keep[1] == 0);
  const auto none = threshold_percentile(std::vector<double>{-1.0, 0.0}, 90.0);
  CHECK(none.count == 0);
  CHECK(none.empty_warning);
}

TEST_CASE("percentile threshold matches the oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(50 + trial);
    for (double& x : v) x = d(rng);
    const auto within = random_mask(v.size(), 0.7, rng);
    std::vector<double> pos;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (within[i] && v[i] > 0) pos.push_back(v[i]);
    if (pos.empty()) continue;
    const double cut = oracle::percentile(pos, 90.0);
    CHECK(percentile(pos, 90.0) == doctest::Approx(cut).epsilon(1e-14));
    const auto t = threshold_percentile(v, 90.0, &within);
    std::size_t expect = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool keep = within[i] && v[i] > 0 && v[i] >= cut;
      expect += keep;
      CHECK((t.keep[i] != 0) == keep);
    }
    CHECK(t.count == expect);
    CHECK(std::abs(static_cast<double>(expect) - 0.1 * pos.size()) <= 1.0);
  }
}

TEST_CASE("Benjamini-Hochberg examples") {
  auto t = threshold_fdr({0.001, 0.2, 0.9}, 0.1);
  CHECK(t.keep == std::vector<char>{1, 0, 0});
  CHECK(threshold_fdr(std::vector<double>(5, 1.0), 0.1).count == 0);
  CHECK(threshold_fdr(std::vector<double>(5, 1e-9), 0.1).count == 5);
  // step-up: p_(2) passes although p_(1) alone would not set the cut
  t = threshold_fdr({0.04, 0.05}, 0.1);
  CHECK(t.count == 2);
  CHECK(threshold_p({0.001, 0.005, 0.0051}, 0.005).keep == std::vector<char>{1, 1, 0});
}

TEST_CASE("Benjamini-Hochberg and F1 match brute force") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(static_cast<std::size_t>(len(rng)));
    for (double& x : p) x = std::pow(u(rng), 3.0);
    if (trial % 7 == 0) p[0] = p.back();
    const double rate = 0.05 + 0.2 * u(rng);
    CHECK(threshold_fdr(p, rate).keep == oracle::bh(p, rate));

    const auto s = random_mask(p.size(), 0.5, rng), t = random_mask(p.size(), 0.5, rng);
    CHECK(f1_similarity(s, t).f1 == doctest::Approx(oracle::f1(s, t)).epsilon(1e-14));
  }
}

TEST_CASE("F1 examples and properties") {
  CHECK(f1_similarity({1, 1, 0}, {1, 1, 0}).f1 == 1.0);
  CHECK(f1_similarity({1, 0, 0}, {0, 1, 0}).f1 == 0.0);
  const auto r = f1_similarity({1, 1, 1, 0}, {0, 1, 1, 1});
  CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  const auto e = f1_similarity({0, 0}, {1, 0});
  CHECK(e.f1 == 0.0);
  CHECK(e.empty);
  CHECK_THROWS_AS(f1_similarity({1}, {1, 0}), InputError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_mask(30, 0.4, rng), t = s;
    std::shuffle(t.begin(), t.end(), rng);
    CHECK(f1_similarity(s, t).f1 == doctest::Approx(f1_similarity(t, s).f1).epsilon(1e-14));
    std::vector<std::size_t> perm(30);
    for (std::size_t i = 0; i < 30; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<char> ps(30), pt(30);
    for (std::size_t i = 0; i < 30; ++i) {
      ps[i] = s[perm[i]];
      pt[i] = t[perm[i]];
    }
    CHECK(f1_similarity(ps, pt).f1 == doctest::Approx(f1_similarity(s, t).f1).epsilon(1e-14));
    const auto f = f1_similarity(s, t);
    CHECK(f.f1 >= 0.0);
    CHECK(f.f1 <= 1.0);
  }
}

TEST_CASE("time-resolved maps") {
  const GridShape g{5, 5, 2};
  std::vector<std::vector<char>> targets(4, std::vector<char>(g.voxels(), 0));
  for (std::size_t s = 0; s < 4; ++s) targets[s][s] = 1;

  SUBCASE("constant relevance scores the counting baseline") {
    std::vector<TimedVolume> tv{{0, 2, 3, Volume3D(g, 2.0, 1.0)}};
    const auto tp = time_resolved_maps(tv, targets, 90.0, 0.0);
    REQUIRE(tp.size() == 4);
    for (int o = 0; o < 3; ++o) CHECK(tp[static_cast<std::size_t>(o)].skipped);
    CHECK_FALSE(tp[3].skipped);
    std::vector<char> all(g.voxels(), 1);
    CHECK(tp[3].state_f1[2] == doctest::Approx(oracle::f1(all, targets[2])));
    CHECK(std::isnan(tp[3].state_f1[0]));
    CHECK(tp[3].mean_f1 == doctest::Approx(tp[3].state_f1[2]));
  }

  SUBCASE("a single volume is smoothed and scored") {
    Volume3D v(g, 2.0);
    v.data[1] = 5.0;
    std::vector<TimedVolume> tv{{0, 1, 0, v}};
    const auto tp = time_resolved_maps(tv, targets, 99.0, 3.0);
    const auto sm = preprocess::gaussian_smooth(v, 3.0);
    const auto keep = threshold_percentile(sm.data, 99.0).keep;
    CHECK(tp[0].state_f1[1] == doctest::Approx(f1_similarity(keep, targets[1]).f1));
    CHECK(tp[0].samples == 1);
  }

  SUBCASE("subjects are averaged after their own means") {
    Volume3D a(g, 2.0), b(g, 2.0);
    a.data[0] = 1.0;
    b.data[0] = 3.0;
    b.data[7] = 10.0;
    std::vector<TimedVolume> tv{{0, 0, 1, a}, {0, 0, 1, a}, {0, 0, 1, a}, {1, 0, 1, b}};
    const auto tp = time_resolved_maps(tv, targets, 90.0, 0.0);
    // group mean: voxel 0 -> 2, voxel 7 -> 5; only voxel 7 passes q=90
    CHECK(tp[1].state_f1[0] == 0.0);
    CHECK(tp[1].samples == 4);
  }
}

TEST_CASE("coefficient attribution") {
  Volume3D v({2, 1, 1}, 2.0);
  v.data = {2.0, -3.0};
  CHECK(coefficient_attribution(v, {0.5, 2.0}).data == std::vector<double>{1.0, -6.0});
  CHECK_THROWS_AS(coefficient_attribution(v, {1.0}), InputError);
}
