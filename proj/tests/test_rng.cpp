#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "salsa/rng.hpp"

using namespace salsa;

TEST_CASE("streams are pure functions of key and counter") {
  RngStream a(42);
  RngStream b(42);
  for (std::uint64_t c = 0; c < 64; ++c) {
    REQUIRE(a.bits(c) == b.bits(c));
    REQUIRE(a.uniform01(c) == b.uniform01(c));
  }
  RngStream other(43);
  int differing = 0;
  for (std::uint64_t c = 0; c < 64; ++c) {
    if (a.bits(c) != other.bits(c)) ++differing;
  }
  REQUIRE(differing > 60);
}

TEST_CASE("child streams are independent and order-insensitive") {
  RngStream root(7);
  const RngStream fit = root.child("fit");
  const RngStream init = root.child("init");
  REQUIRE(fit.bits(0) != init.bits(0));
  // Deriving the same child twice gives the same stream.
  REQUIRE(root.child("fit").bits(5) == fit.bits(5));
  // Indexed children differ from each other and from the label alone.
  REQUIRE(root.child("round", 1).bits(0) != root.child("round", 2).bits(0));
  REQUIRE(root.child("round", 1).bits(0) != root.child("round").bits(0));
  REQUIRE(root.child_index(3).bits(0) != root.child_index(4).bits(0));
}

TEST_CASE("uniform01 lands in [0,1) with uniform moments") {
  RngStream s(123);
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform01(i);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // Uniform(0,1): mean 1/2 (se ~ 0.002), variance 1/12.
  REQUIRE(std::abs(mean - 0.5) < 0.01);
  REQUIRE(std::abs(var - 1.0 / 12.0) < 0.01);
}

TEST_CASE("uniform_open excludes both endpoints") {
  RngStream s(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform_open(i);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform_below covers the whole range without bias") {
  RngStream s(99);
  const std::uint64_t n = 7;
  std::vector<int> counts(n, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = s.uniform_below(i, n);
    REQUIRE(v < n);
    ++counts[v];
  }
  // Each bucket expects 10000 with sd ~ 97; allow 5 sd.
  for (std::uint64_t k = 0; k < n; ++k) {
    REQUIRE(std::abs(counts[k] - 10000) < 500);
  }
}

TEST_CASE("uniform_below handles the degenerate single-item pool") {
  RngStream s(1);
  for (int i = 0; i < 10; ++i) REQUIRE(s.uniform_below(i, 1) == 0);
}

TEST_CASE("normal draws match standard moments") {
  RngStream s(2024);
  const int n = 40000;
  double sum = 0, sq = 0, cube = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(i);
    sum += z;
    sq += z * z;
    cube += z * z * z;
  }
  const double mean = sum / n;
  REQUIRE(std::abs(mean) < 0.02);
  REQUIRE(std::abs(sq / n - 1.0) < 0.03);
  REQUIRE(std::abs(cube / n) < 0.1);  // symmetry
}

TEST_CASE("sampler shuffle is a permutation and is deterministic") {
  std::vector<std::uint32_t> v(100);
  for (std::uint32_t i = 0; i < 100; ++i) v[i] = i;
  Sampler s(RngStream(17).child("shuffle"));
  s.shuffle(v);
  std::vector<std::uint32_t> w(100);
  for (std::uint32_t i = 0; i < 100; ++i) w[i] = i;
  Sampler s2(RngStream(17).child("shuffle"));
  s2.shuffle(w);
  REQUIRE(v == w);
  REQUIRE(!std::is_sorted(v.begin(), v.end()));
  std::vector<std::uint32_t> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (std::uint32_t i = 0; i < 100; ++i) REQUIRE(sorted[i] == i);
}

TEST_CASE("sample_indices returns k distinct ascending indices below n") {
  Sampler s(RngStream(31));
  const auto picks = s.sample_indices(1000, 50);
  REQUIRE(picks.size() == 50);
  REQUIRE(std::is_sorted(picks.begin(), picks.end()));
  std::set<std::uint32_t> uniq(picks.begin(), picks.end());
  REQUIRE(uniq.size() == 50);
  for (auto p : picks) REQUIRE(p < 1000);
}

TEST_CASE("sample_indices with k == n is the full index set") {
  Sampler s(RngStream(8));
  const auto picks = s.sample_indices(20, 20);
  REQUIRE(picks.size() == 20);
  for (std::uint32_t i = 0; i < 20; ++i) REQUIRE(picks[i] == i);
}

TEST_CASE("sample_indices draws uniformly over subsets") {
  // Item 0 of 10 should appear in a k=3 sample with probability 3/10.
  int hits = 0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    Sampler s(RngStream(1000).child_index(r));
    const auto picks = s.sample_indices(10, 3);
    if (std::find(picks.begin(), picks.end(), 0u) != picks.end()) ++hits;
  }
  const double p = static_cast<double>(hits) / reps;
  // sd = sqrt(0.3*0.7/20000) ~ 0.0032; allow 5 sd.
  REQUIRE(std::abs(p - 0.3) < 0.017);
}
