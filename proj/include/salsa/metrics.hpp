#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/oracle.hpp"
#include "salsa/space.hpp"

namespace salsa {

// Identity is the tuple of item ids, not indices or scores, so recall can be
// computed across space files and is immune to oracle noise.
inline std::string id_key(const ProductSpace& space, const Candidate& c) {
  std::string key;
  for (std::size_t v = 0; v < c.indices.size(); ++v) {
    if (v) key += '\t';
    key += space.set(v).ids[c.indices[v]];
  }
  return key;
}

// Fraction of the top-k ground-truth candidates present in the ledger.
inline double recall_at_k(const ProductSpace& space, const ScoreLedger& ledger,
                          const std::vector<Candidate>& truth_top_k,
                          std::size_t k) {
  if (k == 0) throw ConfigError("recall_at_k needs k >= 1");
  if (k > truth_top_k.size()) {
    throw ConfigError("recall k (" + std::to_string(k) +
                      ") exceeds ground-truth size (" +
                      std::to_string(truth_top_k.size()) + ")");
  }
  std::unordered_set<std::string> acquired;
  acquired.reserve(ledger.size());
  for (const auto& [cand, score] : ledger.entries()) {
    acquired.insert(id_key(space, cand));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (acquired.contains(id_key(space, truth_top_k[i]))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

// Distinct vector-0 items among candidates scoring above the threshold.
inline std::uint64_t diversity_count(const ProductSpace& space,
                                     const ScoreLedger& ledger,
                                     double threshold) {
  std::unordered_set<std::string> seen;
  for (const auto& [cand, score] : ledger.entries()) {
    if (score > threshold) seen.insert(space.set(0).ids[cand.indices[0]]);
  }
  return seen.size();
}

// Min/max/mean of the top-k scores in a score list (k clamped to size).
struct TopKStats {
  double min = 0, max = 0, mean = 0;
  std::size_t k = 0;
};

inline TopKStats top_k_stats(std::vector<double> scores, std::size_t k) {
  if (scores.empty()) throw ConfigError("top_k_stats on empty score list");
  if (k == 0) throw ConfigError("top_k_stats needs k >= 1");
  k = std::min(k, scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<long>(k),
                    scores.end(), std::greater<>());
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += scores[i];
  return {scores[k - 1], scores[0], sum / static_cast<double>(k), k};
}

// --- Timing rollup ----------------------------------------------------------

struct PhaseTotals {
  double scoring = 0, training = 0, inference = 0, acquisition = 0;

  double overall() const { return scoring + training + inference + acquisition; }
  PhaseTotals& operator+=(const PhaseTotals& o) {
    scoring += o.scoring;
    training += o.training;
    inference += o.inference;
    acquisition += o.acquisition;
    return *this;
  }
};

struct PhaseStat {
  double mean = 0, stddev = 0;
};

struct TimingRollup {
  PhaseStat scoring, training, inference, acquisition, overall;
};

namespace detail {

inline PhaseStat mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  // Population std; a single trial reports 0.
  return {mean, std::sqrt(ss / n)};
}

}  // namespace detail

// Across-trial mean/std of per-trial phase totals.
inline TimingRollup timing_rollup(const std::vector<PhaseTotals>& trials) {
  if (trials.empty()) throw ConfigError("timing_rollup needs >= 1 trial");
  std::vector<double> sc, tr, in, aq, ov;
  for (const auto& t : trials) {
    sc.push_back(t.scoring);
    tr.push_back(t.training);
    in.push_back(t.inference);
    aq.push_back(t.acquisition);
    ov.push_back(t.overall());
  }
  return {detail::mean_std(sc), detail::mean_std(tr), detail::mean_std(in),
          detail::mean_std(aq), detail::mean_std(ov)};
}

// Least-squares line fit, for the inference-time-vs-pool-size scaling check.
struct LinearFit {
  double slope = 0, intercept = 0, r2 = 0;
};

inline LinearFit linear_fit(const std::vector<double>& xs,
                            const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ConfigError("linear_fit needs >= 2 paired points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) throw ConfigError("linear_fit: degenerate x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

// --- Columnar exports --------------------------------------------------------
// Headered tab-separated files; every writer has a reader so round-trips are
// testable.

struct RecallPoint {
  std::uint64_t acquired = 0;
  double recall = 0;
};

inline void write_recall_curve(const std::string& path,
                               const std::vector<RecallPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "acquired\trecall\n";
  out.precision(17);
  for (const auto& p : points) out << p.acquired << "\t" << p.recall << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<RecallPoint> read_recall_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header != "acquired\trecall") {
    throw IoError("'" + path + "' is not a recall curve file");
  }
  std::vector<RecallPoint> out;
  RecallPoint p;
  while (in >> p.acquired >> p.recall) out.push_back(p);
  return out;
}

// Per-round top-k score summaries (the distribution-evolution export).
struct TopKRoundRow {
  int round = 0;
  std::uint64_t acquired = 0;
  double min = 0, max = 0, mean = 0;
};

inline void write_topk_rounds(const std::string& path,
                              const std::vector<TopKRoundRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "round\tacquired\ttop_min\ttop_max\ttop_mean\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.round << "\t" << r.acquired << "\t" << r.min << "\t" << r.max
        << "\t" << r.mean << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<TopKRoundRow> read_topk_rounds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header != "round\tacquired\ttop_min\ttop_max\ttop_mean") {
    throw IoError("'" + path + "' is not a top-k rounds file");
  }
  std::vector<TopKRoundRow> out;
  TopKRoundRow r;
  while (in >> r.round >> r.acquired >> r.min >> r.max >> r.mean) {
    out.push_back(r);
  }
  return out;
}

// --- Acquisition-probability heatmap -----------------------------------------
// Two files: per-item probabilities with their ascending-probability rank
// (stable on ties), and ground-truth candidates mapped to those rank
// coordinates. High-rank truth rows indicate the sampler has locked onto the
// right synthons.

struct HeatmapItemRow {
  int vector_index = 0;
  std::string item_id;
  double probability = 0;
  std::uint64_t rank = 0;  // ascending by probability within the vector
};

struct HeatmapTruthRow {
  std::vector<std::string> item_ids;
  std::vector<std::uint64_t> ranks;
};

inline std::vector<HeatmapItemRow> heatmap_item_rows(
    const ProductSpace& space,
    const std::vector<std::vector<double>>& probabilities) {
  if (probabilities.size() != space.n_vectors()) {
    throw ConfigError("heatmap: need one probability array per vector");
  }
  std::vector<HeatmapItemRow> rows;
  rows.reserve(space.sum_of_pools());
  for (std::size_t v = 0; v < space.n_vectors(); ++v) {
    const SynthonSet& set = space.set(v);
    if (probabilities[v].size() != set.size()) {
      throw ConfigError("heatmap: probability entry missing for vector " +
                        std::to_string(v));
    }
    std::vector<std::uint32_t> order(set.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return probabilities[v][a] < probabilities[v][b];
                     });
    std::vector<std::uint64_t> rank_of(set.size());
    for (std::uint64_t r = 0; r < order.size(); ++r) rank_of[order[r]] = r;
    for (std::uint32_t i = 0; i < set.size(); ++i) {
      rows.push_back({static_cast<int>(v), set.ids[i], probabilities[v][i],
                      rank_of[i]});
    }
  }
  return rows;
}

inline void write_heatmap(const std::string& items_path,
                          const std::string& truth_path,
                          const ProductSpace& space,
                          const std::vector<std::vector<double>>& probabilities,
                          const std::vector<Candidate>& truth_top_k) {
  const auto rows = heatmap_item_rows(space, probabilities);
  std::ofstream items(items_path);
  if (!items) throw IoError("cannot write '" + items_path + "'");
  items << "vector_index\titem_id\tprobability\trank\n";
  items.precision(17);
  for (const auto& r : rows) {
    items << r.vector_index << "\t" << r.item_id << "\t" << r.probability
          << "\t" << r.rank << "\n";
  }
  if (!items) throw IoError("write failed for '" + items_path + "'");

  // Rank lookup per vector for the truth coordinates.
  std::vector<std::unordered_map<std::string, std::uint64_t>> rank_of(
      space.n_vectors());
  for (const auto& r : rows) {
    rank_of[static_cast<std::size_t>(r.vector_index)][r.item_id] = r.rank;
  }
  std::ofstream truth(truth_path);
  if (!truth) throw IoError("cannot write '" + truth_path + "'");
  for (std::size_t v = 0; v < space.n_vectors(); ++v) {
    truth << "item_id_" << v << "\t";
  }
  for (std::size_t v = 0; v < space.n_vectors(); ++v) {
    truth << "rank_" << v << (v + 1 < space.n_vectors() ? "\t" : "\n");
  }
  for (const Candidate& c : truth_top_k) {
    for (std::size_t v = 0; v < c.indices.size(); ++v) {
      truth << space.set(v).ids[c.indices[v]] << "\t";
    }
    for (std::size_t v = 0; v < c.indices.size(); ++v) {
      truth << rank_of[v].at(space.set(v).ids[c.indices[v]])
            << (v + 1 < c.indices.size() ? "\t" : "\n");
    }
  }
  if (!truth) throw IoError("write failed for '" + truth_path + "'");
}

inline std::vector<HeatmapItemRow> read_heatmap_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header != "vector_index\titem_id\tprobability\trank") {
    throw IoError("'" + path + "' is not a heatmap items file");
  }
  std::vector<HeatmapItemRow> out;
  HeatmapItemRow r;
  while (in >> r.vector_index >> r.item_id >> r.probability >> r.rank) {
    out.push_back(r);
  }
  return out;
}

inline std::vector<HeatmapTruthRow> read_heatmap_truth(const std::string& path,
                                                       std::size_t n_vectors) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  std::vector<HeatmapTruthRow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    HeatmapTruthRow row;
    row.item_ids.resize(n_vectors);
    row.ranks.resize(n_vectors);
    for (auto& id : row.item_ids) {
      if (!(ls >> id)) throw IoError("'" + path + "': truncated truth row");
    }
    for (auto& r : row.ranks) {
      if (!(ls >> r)) throw IoError("'" + path + "': truncated truth row");
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace salsa
