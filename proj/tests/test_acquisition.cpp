#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "salsa/acquisition.hpp"
#include "salsa/errors.hpp"
#include "salsa/oracle.hpp"
#include "salsa/rng.hpp"

using namespace salsa;

namespace {

// Reference values from standard normal tables, so the CDF/PDF identities
// below do not lean on the implementation's own erfc formula.
constexpr double kPhi1 = 0.841344746068543;    // CDF at z = 1
constexpr double kPhiM1 = 0.158655253931457;   // CDF at z = -1
constexpr double kPdf1 = 0.2419707245191434;   // density at z = 1

std::vector<GaussianPrediction> preds(
    std::initializer_list<std::pair<double, double>> ms) {
  std::vector<GaussianPrediction> out;
  for (const auto& [m, s] : ms) out.push_back({m, s});
  return out;
}

// P(item i attains the max) for independent Gaussians, by Simpson's rule:
// integral of pdf_i(x) * prod_{j != i} cdf_j(x) dx.
std::vector<double> argmax_probabilities(
    const std::vector<GaussianPrediction>& p) {
  double lo = 1e300, hi = -1e300;
  for (const auto& g : p) {
    lo = std::min(lo, g.mean - 10.0 * g.std);
    hi = std::max(hi, g.mean + 10.0 * g.std);
  }
  const int n = 20000;  // even interval count for Simpson weights
  const double h = (hi - lo) / n;
  auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto f = [&](double x) {
      const double zi = (x - p[i].mean) / p[i].std;
      double v = std::exp(-0.5 * zi * zi) /
                 (p[i].std * std::sqrt(2.0 * std::numbers::pi));
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (j != i) v *= cdf((x - p[j].mean) / p[j].std);
      }
      return v;
    };
    double acc = f(lo) + f(hi);
    for (int k = 1; k < n; ++k) acc += f(lo + k * h) * (k % 2 ? 4.0 : 2.0);
    out[i] = acc * h / 3.0;
  }
  return out;
}

}  // namespace

TEST_CASE("deterministic strategies produce closed-form scores") {
  const auto p = preds({{0.5, 0.25}, {-1.0, 2.0}});
  const RngStream s(1);

  StrategyConfig greedy;
  greedy.kind = StrategyKind::greedy;
  auto g = score_items(greedy, p, 0.0, s, 0);
  REQUIRE(g[0] == 0.5);
  REQUIRE(g[1] == -1.0);

  StrategyConfig ucb;
  ucb.kind = StrategyKind::ucb;
  ucb.beta = 2.0;
  auto u = score_items(ucb, p, 0.0, s, 0);
  REQUIRE(u[0] == Catch::Approx(1.0).epsilon(1e-15));
  REQUIRE(u[1] == Catch::Approx(3.0).epsilon(1e-15));

  // beta = 0 collapses ucb onto greedy.
  ucb.beta = 0.0;
  REQUIRE(score_items(ucb, p, 0.0, s, 0) == g);
}

TEST_CASE("pi matches the normal CDF including the sigma=0 step") {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::pi;
  const RngStream s(1);

  // z = (mean - y_star) / std = +1 and -1 against y_star = 2.
  auto v = score_items(cfg, preds({{3.0, 1.0}, {1.0, 1.0}}), 2.0, s, 0);
  REQUIRE(v[0] == Catch::Approx(kPhi1).epsilon(1e-12));
  REQUIRE(v[1] == Catch::Approx(kPhiM1).epsilon(1e-12));

  // Zero variance degenerates to a step function with 0.5 at equality.
  auto step = score_items(
      cfg, preds({{3.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}}), 2.0, s, 0);
  REQUIRE(step[0] == 1.0);
  REQUIRE(step[1] == 0.0);
  REQUIRE(step[2] == 0.5);
}

TEST_CASE("ei matches the closed form including the sigma=0 limit") {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::ei;
  const RngStream s(1);

  // mean - y_star = 1, std = 1: EI = 1 * CDF(1) + 1 * pdf(1).
  auto v = score_items(cfg, preds({{3.0, 1.0}, {1.0, 1.0}}), 2.0, s, 0);
  REQUIRE(v[0] == Catch::Approx(kPhi1 + kPdf1).epsilon(1e-12));
  // Symmetric tail: EI(-1) = -CDF(-1) + pdf(1).
  REQUIRE(v[1] == Catch::Approx(-kPhiM1 + kPdf1).epsilon(1e-12));

  // sigma = 0 leaves max(mean - y_star, 0).
  auto lim = score_items(
      cfg, preds({{3.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}}), 2.0, s, 0);
  REQUIRE(lim[0] == 1.0);
  REQUIRE(lim[1] == 0.0);
  REQUIRE(lim[2] == 0.0);

  // EI is never negative.
  for (double m : {-5.0, -1.0, 0.0, 2.0, 7.0}) {
    auto e = score_items(cfg, preds({{m, 0.7}, {m, 0.0}}), 2.0, s, 0);
    REQUIRE(e[0] >= 0.0);
    REQUIRE(e[1] >= 0.0);
  }
}

TEST_CASE("ts with zero variance reduces to the means") {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::ts;
  const auto p = preds({{0.7, 0.0}, {-0.2, 0.0}, {1.4, 0.0}});
  const RngStream s(3);
  for (std::uint64_t draw : {0, 1, 9}) {
    auto v = score_items(cfg, p, 0.0, s, draw);
    REQUIRE(v == std::vector<double>{0.7, -0.2, 1.4});
  }
}

TEST_CASE("ts redraws per attempt while ts-oneshot pins the round draw") {
  const auto p = preds({{0.0, 1.0}, {0.5, 1.0}});
  const RngStream s = RngStream(5).child("round", 2).child("vector", 0);

  StrategyConfig ts;
  ts.kind = StrategyKind::ts;
  auto d0 = score_items(ts, p, 0.0, s, 0);
  auto d1 = score_items(ts, p, 0.0, s, 1);
  REQUIRE(d0 != d1);
  REQUIRE(score_items(ts, p, 0.0, s, 0) == d0);  // same draw replays

  StrategyConfig oneshot;
  oneshot.kind = StrategyKind::ts_oneshot;
  auto o0 = score_items(oneshot, p, 0.0, s, 0);
  auto o7 = score_items(oneshot, p, 0.0, s, 7);
  REQUIRE(o0 == o7);
  // The pinned draw is the same sample ts would take on its first attempt.
  REQUIRE(o0 == d0);
}

TEST_CASE("argmax ties resolve to the lowest index") {
  std::vector<double> a{1.0, 2.0, 2.0};
  REQUIRE(argmax_lowest(a) == 1);
  std::vector<double> b{3.0, 3.0, 3.0};
  REQUIRE(argmax_lowest(b) == 0);
  std::vector<double> c{-1.0};
  REQUIRE(argmax_lowest(c) == 0);
}

TEST_CASE("molecule score is the sum of slot scores") {
  std::vector<double> slots{0.5, -0.25, 2.0};
  REQUIRE(molecule_acquisition_score(slots) == 2.25);
}

TEST_CASE("strategy parsing round-trips and rejects unknown names") {
  for (auto k : {StrategyKind::ts, StrategyKind::ts_oneshot,
                 StrategyKind::greedy, StrategyKind::eps_greedy,
                 StrategyKind::ucb, StrategyKind::ei, StrategyKind::pi}) {
    REQUIRE(parse_strategy(to_string(k)) == k);
  }
  REQUIRE_THROWS_AS(parse_strategy("thompson"), ConfigError);
  REQUIRE_THROWS_AS(parse_strategy(""), ConfigError);
}

TEST_CASE("strategy config validation bounds epsilon and beta") {
  StrategyConfig cfg;
  cfg.epsilon = -0.1;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epsilon = 1.1;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta = -1.0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("score_items rejects an empty prediction list") {
  StrategyConfig cfg;
  REQUIRE_THROWS_AS(
      score_items(cfg, {}, 0.0, RngStream(1), 0), ConfigError);
}

TEST_CASE("epsilon zero is bitwise identical to greedy") {
  // Both through score_items/select_item and through the full composer.
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{0.1, 0.5}, {0.9, 0.5}, {0.4, 0.5}}),
      preds({{1.0, 0.5}, {0.2, 0.5}})};
  StrategyConfig greedy;
  greedy.kind = StrategyKind::greedy;
  StrategyConfig eps0;
  eps0.kind = StrategyKind::eps_greedy;
  eps0.epsilon = 0.0;

  const RngStream round = RngStream(11).child("round", 3).child("acquire");
  ScoreLedger ledger_a(100), ledger_b(100);
  auto a = sample_round(greedy, pv, ledger_a, 2, 10, 0.0, round);
  auto b = sample_round(eps0, pv, ledger_b, 2, 10, 0.0, round);
  REQUIRE(a.candidates == b.candidates);
  REQUIRE(a.attempts == b.attempts);
  REQUIRE(a.converged == b.converged);

  // Greedy proposes the same molecule every attempt, so only one lands.
  REQUIRE(a.candidates.size() == 1);
  REQUIRE(a.candidates[0].indices == std::vector<std::uint32_t>{1, 0});
  REQUIRE(a.converged);
  REQUIRE(a.attempts == 10);
}

TEST_CASE("epsilon one always replaces the argmax with a uniform item") {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::eps_greedy;
  cfg.epsilon = 1.0;
  // Means heavily favor item 0; with epsilon = 1 selection must be uniform.
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{100.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}})};
  const std::uint64_t n = 30000;
  auto freq = estimate_acquisition_probability(cfg, pv, 0.0, n,
                                               RngStream(23).child("mc"));
  // 5 sigma around 1/3 at n draws.
  const double tol = 5.0 * std::sqrt((1.0 / 3) * (2.0 / 3) / n);
  for (double f : freq[0]) REQUIRE(f == Catch::Approx(1.0 / 3).margin(tol));
}

TEST_CASE("composer skips ledger entries and in-batch duplicates") {
  // Tight 2x2 pool with equal means: every combination is equally likely,
  // so all four molecules appear quickly.
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{0.0, 1.0}, {0.0, 1.0}}), preds({{0.0, 1.0}, {0.0, 1.0}})};
  StrategyConfig ts;
  ts.kind = StrategyKind::ts;

  ScoreLedger ledger(100);
  ledger.record(Candidate({0, 0}), 1.0, ScoreLedger::Budget::counted);

  auto out = sample_round(ts, pv, ledger, 3, 1000, 0.0,
                          RngStream(7).child("round", 1));
  REQUIRE_FALSE(out.converged);
  REQUIRE(out.candidates.size() == 3);
  REQUIRE(out.attempts <= 1000);

  std::set<std::vector<std::uint32_t>> seen;
  for (const auto& c : out.candidates) {
    REQUIRE_FALSE(ledger.contains(c));          // never reproposes (0,0)
    REQUIRE(seen.insert(c.indices).second);     // no in-batch duplicate
    REQUIRE(c.indices.size() == 2);
    REQUIRE(c.indices[0] < 2);
    REQUIRE(c.indices[1] < 2);
  }
}

TEST_CASE("composer converges when rho_max attempts cannot fill K") {
  // One of the four molecules is already scored; asking for all four with
  // a deterministic strategy stalls immediately.
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{0.3, 0.0}, {0.1, 0.0}}), preds({{0.2, 0.0}, {0.6, 0.0}})};
  StrategyConfig greedy;
  greedy.kind = StrategyKind::greedy;
  ScoreLedger ledger(100);

  auto out = sample_round(greedy, pv, ledger, 4, 12, 0.0,
                          RngStream(9).child("round", 1));
  REQUIRE(out.converged);
  REQUIRE(out.candidates.size() == 1);
  REQUIRE(out.candidates[0].indices == std::vector<std::uint32_t>{0, 1});
  REQUIRE(out.attempts == 12);
}

TEST_CASE("composer validates its arguments") {
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{0.0, 1.0}}), preds({{0.0, 1.0}})};
  StrategyConfig cfg;
  ScoreLedger ledger(10);
  const RngStream s(1);
  REQUIRE_THROWS_AS(sample_round(cfg, pv, ledger, 0, 10, 0.0, s), ConfigError);
  REQUIRE_THROWS_AS(sample_round(cfg, pv, ledger, 5, 4, 0.0, s), ConfigError);
  std::vector<std::vector<GaussianPrediction>> one{preds({{0.0, 1.0}})};
  REQUIRE_THROWS_AS(sample_round(cfg, one, ledger, 1, 10, 0.0, s),
                    ConfigError);
  StrategyConfig bad;
  bad.epsilon = 2.0;
  REQUIRE_THROWS_AS(sample_round(bad, pv, ledger, 1, 10, 0.0, s), ConfigError);
}

TEST_CASE("composer fills a whole round under a generous rho_max") {
  // 6x6 pool, distinct means, mild noise: 30 of 36 molecules in one round.
  std::vector<std::vector<GaussianPrediction>> pv(2);
  for (int v = 0; v < 2; ++v) {
    for (int i = 0; i < 6; ++i) {
      pv[v].push_back({0.1 * i * (v + 1), 0.8});
    }
  }
  StrategyConfig ts;
  ts.kind = StrategyKind::ts;
  ScoreLedger ledger(1000);
  auto out = sample_round(ts, pv, ledger, 30, 100000, 0.0,
                          RngStream(13).child("round", 4));
  REQUIRE_FALSE(out.converged);
  REQUIRE(out.candidates.size() == 30);
  REQUIRE(out.attempts >= 30);
}

TEST_CASE("ts argmax frequency matches the quadrature probabilities") {
  // The three-item pool from the analytic check: Monte-Carlo selection
  // frequencies at 1e5 draws sit within 0.01 of the integral.
  const auto pool = preds({{0.0, 1.0}, {0.5, 0.5}, {-0.25, 1.5}});
  const auto exact = argmax_probabilities(pool);
  double total = 0;
  for (double p : exact) total += p;
  REQUIRE(total == Catch::Approx(1.0).epsilon(1e-6));

  StrategyConfig ts;
  ts.kind = StrategyKind::ts;
  std::vector<std::vector<GaussianPrediction>> pv{pool};
  auto freq = estimate_acquisition_probability(ts, pv, 0.0, 100000,
                                               RngStream(29).child("mc"));
  REQUIRE(freq.size() == 1);
  REQUIRE(freq[0].size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(freq[0][i] == Catch::Approx(exact[i]).margin(0.01));
  }
}

TEST_CASE("acquisition probabilities sum to one per vector") {
  std::vector<std::vector<GaussianPrediction>> pv{
      preds({{0.0, 1.0}, {0.2, 0.3}}),
      preds({{0.5, 0.1}, {0.4, 0.2}, {0.3, 0.9}})};
  StrategyConfig ts;
  ts.kind = StrategyKind::ts;
  auto freq = estimate_acquisition_probability(ts, pv, 0.0, 2000,
                                               RngStream(31).child("mc"));
  REQUIRE(freq.size() == 2);
  for (const auto& vec : freq) {
    double s = 0;
    for (double f : vec) s += f;
    REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
  }

  // A deterministic strategy concentrates all mass on its argmax.
  StrategyConfig greedy;
  greedy.kind = StrategyKind::greedy;
  auto point = estimate_acquisition_probability(greedy, pv, 0.0, 50,
                                                RngStream(31).child("mc"));
  REQUIRE(point[0] == std::vector<double>{0.0, 1.0});
  REQUIRE(point[1] == std::vector<double>{1.0, 0.0, 0.0});

  REQUIRE_THROWS_AS(
      estimate_acquisition_probability(ts, pv, 0.0, 0, RngStream(1)),
      ConfigError);
}
