#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/oracle.hpp"
#include "salsa/rng.hpp"
#include "salsa/space.hpp"
#include "salsa/surrogate.hpp"

namespace salsa {

enum class StrategyKind { ts, ts_oneshot, greedy, eps_greedy, ucb, ei, pi };

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::ts: return "ts";
    case StrategyKind::ts_oneshot: return "ts-oneshot";
    case StrategyKind::greedy: return "greedy";
    case StrategyKind::eps_greedy: return "eps-greedy";
    case StrategyKind::ucb: return "ucb";
    case StrategyKind::ei: return "ei";
    case StrategyKind::pi: return "pi";
  }
  throw Error("unreachable strategy kind");
}

inline StrategyKind parse_strategy(const std::string& s) {
  if (s == "ts") return StrategyKind::ts;
  if (s == "ts-oneshot") return StrategyKind::ts_oneshot;
  if (s == "greedy") return StrategyKind::greedy;
  if (s == "eps-greedy") return StrategyKind::eps_greedy;
  if (s == "ucb") return StrategyKind::ucb;
  if (s == "ei") return StrategyKind::ei;
  if (s == "pi") return StrategyKind::pi;
  throw ConfigError("unknown acquisition strategy '" + s + "'");
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::ts;
  double epsilon = 0.05;  // eps-greedy replacement probability, per slot
  double beta = 2.0;      // ucb exploration weight

  void validate() const {
    if (epsilon < 0 || epsilon > 1) throw ConfigError("epsilon must be in [0,1]");
    if (beta < 0) throw ConfigError("beta must be >= 0");
  }

  bool needs_best() const {
    return kind == StrategyKind::ei || kind == StrategyKind::pi;
  }
};

namespace detail {

inline double norm_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}
inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace detail

// Per-item acquisition scores for one vector. `stream` is the per-round,
// per-vector substream; `draw` indexes the attempt. ts derives fresh draws
// from `draw`; ts-oneshot pins draw 0, so every call within the round sees
// the same sample. Deterministic strategies ignore both.
inline std::vector<double> score_items(
    const StrategyConfig& cfg, const std::vector<GaussianPrediction>& preds,
    double y_star, const RngStream& stream, std::uint64_t draw) {
  if (preds.empty()) throw ConfigError("score_items on empty prediction list");
  std::vector<double> out(preds.size());
  switch (cfg.kind) {
    case StrategyKind::ts:
    case StrategyKind::ts_oneshot: {
      const RngStream d =
          stream.child("ts-draw").child_index(
              cfg.kind == StrategyKind::ts ? draw : 0);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        out[i] = preds[i].mean + preds[i].std * d.normal(i);
      }
      break;
    }
    case StrategyKind::greedy:
    case StrategyKind::eps_greedy:
      for (std::size_t i = 0; i < preds.size(); ++i) out[i] = preds[i].mean;
      break;
    case StrategyKind::ucb:
      for (std::size_t i = 0; i < preds.size(); ++i) {
        out[i] = preds[i].mean + cfg.beta * preds[i].std;
      }
      break;
    case StrategyKind::pi:
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i].mean - y_star;
        if (preds[i].std == 0.0) {
          out[i] = d > 0 ? 1.0 : (d < 0 ? 0.0 : 0.5);
        } else {
          out[i] = detail::norm_cdf(d / preds[i].std);
        }
      }
      break;
    case StrategyKind::ei:
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i].mean - y_star;
        if (preds[i].std == 0.0) {
          out[i] = std::max(d, 0.0);
        } else {
          const double z = d / preds[i].std;
          out[i] = d * detail::norm_cdf(z) + preds[i].std * detail::norm_pdf(z);
        }
      }
      break;
  }
  return out;
}

// Index of the maximal score; ties go to the lowest index.
inline std::uint32_t argmax_lowest(std::span<const double> scores) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// Pick one item for a vector slot. eps-greedy replaces the argmax with a
// uniform item with probability epsilon, using substreams disjoint from the
// score draws so that epsilon = 0 is bitwise-identical to greedy.
inline std::uint32_t select_item(const StrategyConfig& cfg,
                                 std::span<const double> scores,
                                 const RngStream& vector_stream,
                                 std::uint64_t draw) {
  if (cfg.kind == StrategyKind::eps_greedy && cfg.epsilon > 0) {
    if (vector_stream.child("eps").uniform01(draw) < cfg.epsilon) {
      return static_cast<std::uint32_t>(
          vector_stream.child("epsidx").uniform_below(draw, scores.size()));
    }
  }
  return argmax_lowest(scores);
}

// Molecule score = sum of its synthon acquisition scores.
inline double molecule_acquisition_score(std::span<const double> slot_scores) {
  double s = 0;
  for (double v : slot_scores) s += v;
  return s;
}

struct RoundSample {
  std::vector<Candidate> candidates;
  bool converged = false;        // K could not be filled within rho_max
  std::uint64_t attempts = 0;    // rejection counter rho at exit
};

// The rejection-sampling composer: each attempt draws fresh per-vector
// scores, takes a per-vector selection, composes the candidate, and rejects
// it if already scored or already in this batch. Terminates early (converged)
// once rho_max attempts fail to fill K.
inline RoundSample sample_round(
    const StrategyConfig& cfg,
    const std::vector<std::vector<GaussianPrediction>>& per_vector_preds,
    const ScoreLedger& ledger, std::uint64_t k, std::uint64_t rho_max,
    double y_star, const RngStream& round_stream) {
  cfg.validate();
  if (k < 1) throw ConfigError("sample_round needs K >= 1");
  if (rho_max < k) throw ConfigError("rho_max must be >= K");
  const std::size_t n_vectors = per_vector_preds.size();
  if (n_vectors < 2) throw ConfigError("need predictions for >= 2 vectors");

  RoundSample out;
  std::unordered_set<Candidate, CandidateHash> in_batch;
  std::vector<double> scores;
  while (out.candidates.size() < k && out.attempts < rho_max) {
    const std::uint64_t draw = out.attempts;
    ++out.attempts;
    Candidate cand;
    cand.indices.resize(n_vectors);
    for (std::size_t v = 0; v < n_vectors; ++v) {
      const RngStream vs = round_stream.child("vector", v);
      scores = score_items(cfg, per_vector_preds[v], y_star, vs, draw);
      cand.indices[v] = select_item(cfg, scores, vs, draw);
    }
    if (ledger.contains(cand) || in_batch.contains(cand)) continue;
    in_batch.insert(cand);
    out.candidates.push_back(std::move(cand));
  }
  out.converged = out.candidates.size() < k;
  return out;
}

// Monte-Carlo estimate of per-item acquisition probability: the frequency
// with which each item is selected for its slot over n_draws independent
// attempts. This is the quantity behind the selection heatmaps.
inline std::vector<std::vector<double>> estimate_acquisition_probability(
    const StrategyConfig& cfg,
    const std::vector<std::vector<GaussianPrediction>>& per_vector_preds,
    double y_star, std::uint64_t n_draws, const RngStream& stream) {
  cfg.validate();
  if (n_draws < 1) throw ConfigError("n_draws must be >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(per_vector_preds.size());
  for (std::size_t v = 0; v < per_vector_preds.size(); ++v) {
    const RngStream vs = stream.child("vector", v);
    std::vector<std::uint64_t> counts(per_vector_preds[v].size(), 0);
    for (std::uint64_t d = 0; d < n_draws; ++d) {
      auto scores = score_items(cfg, per_vector_preds[v], y_star, vs, d);
      ++counts[select_item(cfg, scores, vs, d)];
    }
    std::vector<double> freq(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      freq[i] = static_cast<double>(counts[i]) / static_cast<double>(n_draws);
    }
    out.push_back(std::move(freq));
  }
  return out;
}

}  // namespace salsa
