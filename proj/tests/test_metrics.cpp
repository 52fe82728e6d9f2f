#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "salsa/errors.hpp"
#include "salsa/metrics.hpp"
#include "salsa/oracle.hpp"
#include "salsa/space.hpp"

using namespace salsa;

namespace {

// A tiny hand-built space with known ids: vector 0 = {a0,a1,a2},
// vector 1 = {b0,b1}.
ProductSpace named_space() {
  SynthonSet s0;
  s0.vector_index = 0;
  s0.feature_dim = 1;
  s0.ids = {"a0", "a1", "a2"};
  s0.features = {0.0, 0.1, 0.2};
  SynthonSet s1;
  s1.vector_index = 1;
  s1.feature_dim = 1;
  s1.ids = {"b0", "b1"};
  s1.features = {0.3, 0.4};
  std::vector<SynthonSet> sets{s0, s1};
  return ProductSpace(std::move(sets));
}

Candidate cand(std::initializer_list<std::uint32_t> idx) {
  return Candidate(std::vector<std::uint32_t>(idx));
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("salsa_met_" + tag);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("id_key joins per-vector item ids with tabs") {
  const auto space = named_space();
  REQUIRE(id_key(space, cand({2, 1})) == "a2\tb1");
  REQUIRE(id_key(space, cand({0, 0})) == "a0\tb0");
}

TEST_CASE("recall counts ground-truth candidates present in the ledger") {
  const auto space = named_space();
  ScoreLedger ledger(10);
  ledger.record(cand({1, 0}), 2.0, ScoreLedger::Budget::counted);
  ledger.record(cand({0, 1}), 1.0, ScoreLedger::Budget::counted);

  const std::vector<Candidate> truth{cand({1, 0}), cand({2, 1}), cand({0, 0})};
  REQUIRE(recall_at_k(space, ledger, truth, 1) == 1.0);
  REQUIRE(recall_at_k(space, ledger, truth, 2) == 0.5);
  REQUIRE(recall_at_k(space, ledger, truth, 3) == Catch::Approx(1.0 / 3));

  REQUIRE_THROWS_AS(recall_at_k(space, ledger, truth, 0), ConfigError);
  REQUIRE_THROWS_AS(recall_at_k(space, ledger, truth, 4), ConfigError);

  ScoreLedger empty(10);
  REQUIRE(recall_at_k(space, empty, truth, 3) == 0.0);
}

TEST_CASE("diversity counts distinct vector-0 items above the threshold") {
  const auto space = named_space();
  ScoreLedger ledger(10);
  ledger.record(cand({0, 0}), 1.0, ScoreLedger::Budget::counted);
  ledger.record(cand({1, 0}), 2.0, ScoreLedger::Budget::counted);
  ledger.record(cand({1, 1}), 3.0, ScoreLedger::Budget::counted);
  ledger.record(cand({2, 0}), 0.5, ScoreLedger::Budget::counted);

  REQUIRE(diversity_count(space, ledger, 0.9) == 2);   // a0, a1
  REQUIRE(diversity_count(space, ledger, 0.0) == 3);   // all three
  REQUIRE(diversity_count(space, ledger, 10.0) == 0);
  // Strictly-above semantics: a score equal to the threshold is excluded.
  REQUIRE(diversity_count(space, ledger, 3.0) == 0);
}

TEST_CASE("top-k stats clamp k and compute exact order statistics") {
  std::vector<double> scores{5.0, 1.0, 4.0, 2.0, 3.0};
  const auto top2 = top_k_stats(scores, 2);
  REQUIRE(top2.k == 2);
  REQUIRE(top2.min == 4.0);
  REQUIRE(top2.max == 5.0);
  REQUIRE(top2.mean == 4.5);

  const auto all = top_k_stats(scores, 10);  // clamped to the list size
  REQUIRE(all.k == 5);
  REQUIRE(all.min == 1.0);
  REQUIRE(all.max == 5.0);
  REQUIRE(all.mean == 3.0);

  const auto one = top_k_stats(scores, 1);
  REQUIRE(one.min == 5.0);
  REQUIRE(one.max == 5.0);

  REQUIRE_THROWS_AS(top_k_stats({}, 3), ConfigError);
  REQUIRE_THROWS_AS(top_k_stats(scores, 0), ConfigError);
}

TEST_CASE("timing rollup aggregates per-trial phase totals") {
  PhaseTotals t1{1.0, 2.0, 3.0, 4.0};
  REQUIRE(t1.overall() == 10.0);

  // A single trial has zero spread.
  const auto solo = timing_rollup({t1});
  REQUIRE(solo.scoring.mean == 1.0);
  REQUIRE(solo.scoring.stddev == 0.0);
  REQUIRE(solo.overall.mean == 10.0);
  REQUIRE(solo.overall.stddev == 0.0);

  PhaseTotals t2{3.0, 2.0, 1.0, 0.0};
  const auto pair = timing_rollup({t1, t2});
  REQUIRE(pair.scoring.mean == 2.0);
  REQUIRE(pair.scoring.stddev == 1.0);  // population std of {1, 3}
  REQUIRE(pair.training.stddev == 0.0);
  REQUIRE(pair.acquisition.mean == 2.0);
  REQUIRE(pair.acquisition.stddev == 2.0);
  REQUIRE(pair.overall.mean == 8.0);
  REQUIRE(pair.overall.stddev == 2.0);

  PhaseTotals sum = t1;
  sum += t2;
  REQUIRE(sum.scoring == 4.0);
  REQUIRE(sum.overall() == 16.0);

  REQUIRE_THROWS_AS(timing_rollup({}), ConfigError);
}

TEST_CASE("linear fit recovers an exact line") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> ys{3.0, 5.0, 7.0, 9.0};  // y = 2x + 1
  const auto f = linear_fit(xs, ys);
  REQUIRE(f.slope == Catch::Approx(2.0).epsilon(1e-14));
  REQUIRE(f.intercept == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(f.r2 == Catch::Approx(1.0).epsilon(1e-14));

  // Constant targets define a flat perfect fit.
  const auto flat = linear_fit(xs, {2.0, 2.0, 2.0, 2.0});
  REQUIRE(flat.slope == 0.0);
  REQUIRE(flat.intercept == 2.0);
  REQUIRE(flat.r2 == 1.0);

  REQUIRE_THROWS_AS(linear_fit({1.0}, {2.0}), ConfigError);
  REQUIRE_THROWS_AS(linear_fit(xs, {1.0, 2.0}), ConfigError);
  REQUIRE_THROWS_AS(linear_fit({2.0, 2.0}, {1.0, 5.0}), ConfigError);
}

TEST_CASE("recall curves round-trip through their tsv file") {
  const auto dir = temp_dir("recall");
  const auto path = (dir / "curve.tsv").string();
  const std::vector<RecallPoint> points{
      {100, 0.1}, {200, 0.30000000000000004}, {300, 1.0}};
  write_recall_curve(path, points);

  const auto back = read_recall_curve(path);
  REQUIRE(back.size() == points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    REQUIRE(back[i].acquired == points[i].acquired);
    REQUIRE(back[i].recall == points[i].recall);  // 17 digits: exact
  }

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "acquired\trecall");

  REQUIRE_THROWS_AS(read_recall_curve((dir / "nope.tsv").string()), IoError);
}

TEST_CASE("top-k round summaries round-trip through their tsv file") {
  const auto dir = temp_dir("topk");
  const auto path = (dir / "rounds.tsv").string();
  const std::vector<TopKRoundRow> rows{{1, 100, 0.5, 2.5, 1.75},
                                       {2, 200, 0.7, 3.1, 2.0}};
  write_topk_rounds(path, rows);
  const auto back = read_topk_rounds(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[1].round == 2);
  REQUIRE(back[1].acquired == 200);
  REQUIRE(back[1].min == 0.7);
  REQUIRE(back[1].max == 3.1);
  REQUIRE(back[1].mean == 2.0);

  // Readers check the header, so files cannot be mixed up silently.
  REQUIRE_THROWS_AS(read_recall_curve(path), IoError);
  const auto curve = (dir / "curve.tsv").string();
  write_recall_curve(curve, {{10, 0.5}});
  REQUIRE_THROWS_AS(read_topk_rounds(curve), IoError);
}

TEST_CASE("heatmap rows rank items by ascending probability per vector") {
  const auto space = named_space();
  const std::vector<std::vector<double>> probs{{0.2, 0.5, 0.3}, {0.7, 0.7}};
  const auto rows = heatmap_item_rows(space, probs);
  REQUIRE(rows.size() == space.sum_of_pools());

  auto rank_of = [&](const std::string& id) {
    for (const auto& r : rows) {
      if (r.item_id == id) return r.rank;
    }
    throw std::logic_error("missing id");
  };
  REQUIRE(rank_of("a0") == 0);  // 0.2 lowest
  REQUIRE(rank_of("a2") == 1);  // 0.3
  REQUIRE(rank_of("a1") == 2);  // 0.5 highest
  // Equal probabilities keep their original order (stable ranking).
  REQUIRE(rank_of("b0") == 0);
  REQUIRE(rank_of("b1") == 1);

  REQUIRE_THROWS_AS(heatmap_item_rows(space, {{0.2, 0.5, 0.3}}), ConfigError);
  REQUIRE_THROWS_AS(heatmap_item_rows(space, {{0.2, 0.5}, {0.7, 0.7}}),
                    ConfigError);
}

TEST_CASE("heatmap files round-trip items and truth coordinates") {
  const auto space = named_space();
  const auto dir = temp_dir("heatmap");
  const auto items_path = (dir / "items.tsv").string();
  const auto truth_path = (dir / "truth.tsv").string();
  const std::vector<std::vector<double>> probs{{0.2, 0.5, 0.3}, {0.7, 0.7}};
  const std::vector<Candidate> truth{cand({1, 0}), cand({2, 1})};
  write_heatmap(items_path, truth_path, space, probs, truth);

  const auto items = read_heatmap_items(items_path);
  REQUIRE(items.size() == 5);
  for (const auto& r : items) {
    const auto& expected = probs[static_cast<std::size_t>(r.vector_index)];
    bool found = false;
    for (double p : expected) found = found || p == r.probability;
    REQUIRE(found);
  }

  const auto back = read_heatmap_truth(truth_path, 2);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].item_ids == std::vector<std::string>{"a1", "b0"});
  REQUIRE(back[0].ranks == std::vector<std::uint64_t>{2, 0});
  REQUIRE(back[1].item_ids == std::vector<std::string>{"a2", "b1"});
  REQUIRE(back[1].ranks == std::vector<std::uint64_t>{1, 1});

  // Truncated truth rows are refused rather than zero-filled.
  const auto broken = (dir / "broken.tsv").string();
  {
    std::ofstream out(broken);
    out << "item_id_0\titem_id_1\trank_0\trank_1\n";
    out << "a1\tb0\t2\n";
  }
  REQUIRE_THROWS_AS(read_heatmap_truth(broken, 2), IoError);
  REQUIRE_THROWS_AS(read_heatmap_items((dir / "none.tsv").string()), IoError);
}
