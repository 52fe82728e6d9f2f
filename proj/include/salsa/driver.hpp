#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <queue>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salsa/acquisition.hpp"
#include "salsa/config.hpp"
#include "salsa/errors.hpp"
#include "salsa/metrics.hpp"
#include "salsa/oracle.hpp"
#include "salsa/rng.hpp"
#include "salsa/space.hpp"
#include "salsa/surrogate.hpp"

namespace salsa {

struct RoundRecord {
  int round = 0;  // 1-based; tabular warm-up is round 0
  std::vector<Candidate> acquired;
  std::vector<double> scores;
  std::uint64_t ledger_size = 0;  // after this round
  double best_so_far = 0;
  bool converged = false;
  double recall = -1;  // -1 when no ground truth is tracked
  std::uint64_t attempts = 0;
  std::uint64_t inference_passes = 0;
  PhaseTotals timings;
  TopKStats top_stats;
  std::string checkpoint_path;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::unique_ptr<ScoreLedger> ledger;
  double final_recall = -1;
  PhaseTotals timings;
  std::uint64_t inference_passes = 0;
  bool converged = false;
};

// Everything a run needs, resolvable from a config or assembled by hand in
// tests.
struct RunContext {
  RunConfig cfg;
  std::shared_ptr<const ProductSpace> space;
  std::shared_ptr<ObjectiveFn> objective;
  std::vector<Candidate> truth;  // brute-force top-k; empty = no recall
};

// Builds space, objective, and (when requested) ground truth. Ground truth
// is scored on a separate objective instance so the run's call accounting
// stays untouched.
inline RunContext make_context(const RunConfig& cfg) {
  cfg.validate();
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.space = build_space_from_spec(cfg.space);
  ctx.objective = make_objective(cfg.objective, ctx.space);
  if (cfg.ground_truth_k > 0) {
    auto truth_objective = make_objective(cfg.objective, ctx.space);
    auto ranked = brute_force_ground_truth(*ctx.space, *truth_objective,
                                           cfg.ground_truth_k,
                                           cfg.enumeration_cap);
    ctx.truth.reserve(ranked.size());
    for (auto& [cand, score] : ranked) ctx.truth.push_back(std::move(cand));
  }
  return ctx;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Odometer decode, last vector fastest — the same order the brute-force
// enumerator uses.
inline Candidate linear_to_candidate(const ProductSpace& space,
                                     std::uint64_t linear) {
  std::vector<std::uint32_t> idx(space.n_vectors());
  for (std::size_t v = space.n_vectors(); v-- > 0;) {
    const std::uint64_t n = space.set(v).size();
    idx[v] = static_cast<std::uint32_t>(linear % n);
    linear /= n;
  }
  return Candidate{std::move(idx)};
}

}  // namespace detail

inline json record_to_json(const ProductSpace& space, const RoundRecord& r) {
  json acquired = json::array();
  for (std::size_t i = 0; i < r.acquired.size(); ++i) {
    json ids = json::array();
    for (std::size_t v = 0; v < r.acquired[i].indices.size(); ++v) {
      ids.push_back(space.set(v).ids[r.acquired[i].indices[v]]);
    }
    acquired.push_back({{"indices", r.acquired[i].indices},
                        {"ids", ids},
                        {"score", r.scores[i]}});
  }
  return json{{"round", r.round},
              {"acquired", acquired},
              {"ledger_size", r.ledger_size},
              {"best_so_far", r.best_so_far},
              {"converged", r.converged},
              {"recall", r.recall},
              {"attempts", r.attempts},
              {"inference_passes", r.inference_passes},
              {"timings",
               {{"scoring_s", r.timings.scoring},
                {"training_s", r.timings.training},
                {"inference_s", r.timings.inference},
                {"acquisition_s", r.timings.acquisition}}},
              {"top_k",
               {{"min", r.top_stats.min},
                {"max", r.top_stats.max},
                {"mean", r.top_stats.mean},
                {"k", r.top_stats.k}}},
              {"checkpoint", r.checkpoint_path}};
}

// Strips the fields that legitimately differ between an original run and a
// checkpoint replay (wall-clock noise and file locations).
inline json record_replay_view(json j) {
  j.erase("timings");
  j.erase("checkpoint");
  return j;
}

namespace detail {

// Per-run output directory. With an empty dir every write is a no-op, so
// library callers pay nothing.
class RunSink {
 public:
  RunSink(const RunConfig& cfg, const ProductSpace& space)
      : dir_(cfg.output_dir), checkpoints_(cfg.checkpoints), space_(space) {
    if (dir_.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(dir_);
    if (checkpoints_) fs::create_directories(dir_ + "/checkpoints");
    std::ofstream cfg_out(dir_ + "/config.json");
    if (!cfg_out) throw IoError("cannot write config to '" + dir_ + "'");
    cfg_out << to_json(cfg).dump(2) << "\n";
    records_.open(dir_ + "/records.jsonl", std::ios::app);
    if (!records_) throw IoError("cannot open records file in '" + dir_ + "'");
  }

  bool active() const { return !dir_.empty(); }
  bool checkpoints() const { return active() && checkpoints_; }
  const std::string& dir() const { return dir_; }

  void append_record(const RoundRecord& r) {
    if (!active()) return;
    records_ << record_to_json(space_, r).dump() << "\n";
    records_.flush();
  }

  std::string checkpoint_path(int round) const {
    return dir_ + "/checkpoints/round_" + std::to_string(round) + ".json";
  }
  std::string model_path(int round) const {
    return dir_ + "/checkpoints/model_round_" + std::to_string(round) + ".txt";
  }

  void write_model(int round, const SynthonSurrogate& surrogate) const {
    if (!checkpoints()) return;
    std::ofstream out(model_path(round));
    if (!out) throw IoError("cannot write model checkpoint");
    surrogate.save(out);
  }

 private:
  std::string dir_;
  bool checkpoints_;
  const ProductSpace& space_;
  std::ofstream records_;
};

inline std::string write_checkpoint(const RunSink& sink, const RunConfig& cfg,
                                    const ScoreLedger& ledger, int round) {
  if (!sink.checkpoints()) return "";
  json entries = json::array();
  const auto& flags = ledger.exempt_flags();
  for (std::size_t i = 0; i < ledger.entries().size(); ++i) {
    const auto& [cand, score] = ledger.entries()[i];
    entries.push_back(json::array(
        {cand.indices, score, static_cast<int>(flags[i])}));
  }
  json j{{"version", 1},
         {"method", cfg.method},
         {"seed", cfg.seed},
         {"round", round},
         {"entries", entries}};
  const std::string path = sink.checkpoint_path(round);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
  if (!out) throw IoError("checkpoint write failed for '" + path + "'");
  return path;
}

}  // namespace detail

// Reinstates the ledger from a checkpoint; returns the round it closed.
inline int load_checkpoint(const std::string& path, const RunConfig& cfg,
                           ScoreLedger& ledger) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1) {
    throw IoError("unrecognized checkpoint format in '" + path + "'");
  }
  if (j.value("seed", std::uint64_t{0}) != cfg.seed ||
      j.value("method", std::string{}) != cfg.method) {
    throw ConfigError("checkpoint '" + path +
                      "' was produced by a different run configuration");
  }
  for (const auto& e : j.at("entries")) {
    Candidate c{e.at(0).get<std::vector<std::uint32_t>>()};
    ledger.record(c, e.at(1).get<double>(),
                  e.at(2).get<int>() != 0 ? ScoreLedger::Budget::exempt
                                          : ScoreLedger::Budget::counted);
  }
  return j.at("round").get<int>();
}

namespace detail {

// Shared per-round bookkeeping across all methods.
class RecallTracker {
 public:
  RecallTracker(const std::vector<Candidate>& truth, std::uint64_t k)
      : k_(k), truth_set_(truth.begin(), truth.end()) {}

  void observe(const Candidate& c) {
    if (!truth_set_.empty() && truth_set_.contains(c)) ++hits_;
  }
  void observe_ledger(const ScoreLedger& ledger) {
    for (const auto& [cand, score] : ledger.entries()) observe(cand);
  }
  double recall() const {
    if (truth_set_.empty()) return -1;
    return static_cast<double>(hits_) / static_cast<double>(k_);
  }

 private:
  std::uint64_t k_ = 0;
  std::uint64_t hits_ = 0;
  std::unordered_set<Candidate, CandidateHash> truth_set_;
};

inline std::vector<double> ledger_scores(const ScoreLedger& ledger) {
  std::vector<double> s;
  s.reserve(ledger.size());
  for (const auto& [cand, score] : ledger.entries()) s.push_back(score);
  return s;
}

inline void finish_record(RoundRecord& rec, const ScoreLedger& ledger,
                          const RecallTracker& tracker, std::uint64_t top_k) {
  rec.ledger_size = ledger.size();
  rec.best_so_far = ledger.empty() ? 0 : ledger.best_score();
  rec.recall = tracker.recall();
  if (!ledger.empty()) {
    rec.top_stats = top_k_stats(ledger_scores(ledger), top_k);
  }
}

// Zip-of-shuffles initial sampling: per vector an endless stream of fresh
// permutations, zipped positionally and deduplicated. Degenerates to
// exhaustive enumeration when K covers the whole space.
inline std::vector<Candidate> initial_batch(const ProductSpace& space,
                                            const ScoreLedger& ledger,
                                            std::uint64_t k,
                                            const RngStream& stream) {
  std::vector<Candidate> batch;
  if (space.size_known() && k >= space.total_size()) {
    batch.reserve(space.total_size());
    for (std::uint64_t m = 0; m < space.total_size(); ++m) {
      Candidate c = linear_to_candidate(space, m);
      if (!ledger.contains(c)) batch.push_back(std::move(c));
    }
    return batch;
  }
  const std::size_t n_vectors = space.n_vectors();
  std::vector<std::vector<std::uint32_t>> perms(n_vectors);
  std::vector<std::uint64_t> wraps(n_vectors, 0);
  std::vector<std::size_t> pos(n_vectors, 0);
  for (std::size_t v = 0; v < n_vectors; ++v) {
    perms[v].resize(space.set(v).size());
    for (std::uint32_t i = 0; i < perms[v].size(); ++i) perms[v][i] = i;
    Sampler s(stream.child("vector", v).child_index(0));
    s.shuffle(perms[v]);
  }
  std::unordered_set<Candidate, CandidateHash> in_batch;
  const std::uint64_t max_attempts = std::max<std::uint64_t>(1000, 100 * k);
  std::uint64_t attempts = 0;
  while (batch.size() < k) {
    if (++attempts > max_attempts) {
      throw Error("initial sampling failed to assemble " + std::to_string(k) +
                  " distinct candidates after " + std::to_string(attempts - 1) +
                  " attempts");
    }
    Candidate c;
    c.indices.resize(n_vectors);
    for (std::size_t v = 0; v < n_vectors; ++v) {
      if (pos[v] == perms[v].size()) {
        pos[v] = 0;
        ++wraps[v];
        Sampler s(stream.child("vector", v).child_index(wraps[v]));
        s.shuffle(perms[v]);
      }
      c.indices[v] = perms[v][pos[v]++];
    }
    if (ledger.contains(c) || in_batch.contains(c)) continue;
    in_batch.insert(c);
    batch.push_back(std::move(c));
  }
  return batch;
}

inline std::uint64_t round_quota(const ProductSpace& space,
                                 const ScoreLedger& ledger, std::uint64_t k) {
  std::uint64_t quota = std::min<std::uint64_t>(k, ledger.remaining());
  if (space.size_known()) {
    quota = std::min<std::uint64_t>(quota, space.total_size() - ledger.size());
  }
  return quota;
}

}  // namespace detail

// --- SALSA ------------------------------------------------------------------
// Algorithm: round 1 scores K uniform-random unseen candidates; every later
// round retrains the per-synthon surrogates from scratch on the full ledger,
// predicts score distributions for every item (sum of pool sizes, never the
// product), stochastically composes K unseen candidates, and scores them.
// Ends early when the composer cannot fill a round.
inline RunResult run_salsa(RunContext& ctx,
                           const std::string& resume_checkpoint = "") {
  const RunConfig& cfg = ctx.cfg;
  const ProductSpace& space = *ctx.space;
  RngStream root(cfg.seed);
  auto surrogate = make_surrogate(space, make_surrogate_config(cfg.surrogate));
  const StrategyConfig strategy = make_strategy_config(cfg.strategy);

  RunResult res;
  res.ledger = std::make_unique<ScoreLedger>(cfg.budget());
  ScoreLedger& ledger = *res.ledger;
  detail::RunSink sink(cfg, space);
  detail::RecallTracker tracker(ctx.truth, cfg.ground_truth_k);
  const std::uint64_t top_k =
      cfg.ground_truth_k > 0 ? cfg.ground_truth_k : cfg.per_round;

  int start_round = 1;
  if (!resume_checkpoint.empty()) {
    start_round = load_checkpoint(resume_checkpoint, cfg, ledger) + 1;
    tracker.observe_ledger(ledger);
  }

  for (int round = start_round; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    std::vector<Candidate> batch;
    const std::uint64_t passes_before = surrogate->inference_passes();

    const std::uint64_t quota =
        detail::round_quota(space, ledger, cfg.per_round);
    if (round == 1) {
      const auto t0 = detail::Clock::now();
      batch = detail::initial_batch(space, ledger, quota, root.child("init"));
      rec.attempts = batch.size();
      rec.timings.acquisition = detail::seconds_since(t0);
    } else if (quota == 0) {
      rec.converged = true;
    } else {
      const RngStream round_stream =
          root.child("round", static_cast<std::uint64_t>(round));
      {
        const auto t0 = detail::Clock::now();
        SynthonDataset data = SynthonDataset::from_entries(ledger.entries());
        surrogate->fit(space, data, round_stream.child("fit"));
        rec.timings.training = detail::seconds_since(t0);
        sink.write_model(round, *surrogate);
      }
      std::vector<std::vector<GaussianPrediction>> preds(space.n_vectors());
      {
        const auto t0 = detail::Clock::now();
        for (std::size_t v = 0; v < space.n_vectors(); ++v) {
          preds[v] = surrogate->predict_all(space, static_cast<int>(v));
        }
        rec.timings.inference = detail::seconds_since(t0);
      }
      if (cfg.acq_prob_draws > 0 && sink.active()) {
        const auto probs = estimate_acquisition_probability(
            strategy, preds, ledger.best_score(), cfg.acq_prob_draws,
            round_stream.child("acq-prob"));
        write_heatmap(
            sink.dir() + "/heatmap_items_round_" + std::to_string(round) +
                ".tsv",
            sink.dir() + "/heatmap_truth_round_" + std::to_string(round) +
                ".tsv",
            space, probs, ctx.truth);
      }
      {
        const auto t0 = detail::Clock::now();
        RoundSample rs =
            sample_round(strategy, preds, ledger, quota,
                         cfg.effective_rho_max(), ledger.best_score(),
                         round_stream.child("acquire"));
        batch = std::move(rs.candidates);
        rec.attempts = rs.attempts;
        rec.converged = rs.converged;
        rec.timings.acquisition = detail::seconds_since(t0);
      }
    }

    if (!batch.empty()) {
      const auto t0 = detail::Clock::now();
      auto scored = ledger.score_batch(*ctx.objective, batch);
      rec.timings.scoring = detail::seconds_since(t0);
      rec.acquired.reserve(scored.size());
      rec.scores.reserve(scored.size());
      for (auto& [cand, score] : scored) {
        tracker.observe(cand);
        rec.acquired.push_back(std::move(cand));
        rec.scores.push_back(score);
      }
    }
    rec.inference_passes = surrogate->inference_passes() - passes_before;
    detail::finish_record(rec, ledger, tracker, top_k);
    rec.checkpoint_path = detail::write_checkpoint(sink, cfg, ledger, round);
    res.timings += rec.timings;
    sink.append_record(rec);
    res.records.push_back(std::move(rec));
    if (res.records.back().converged) break;
  }

  res.inference_passes = surrogate->inference_passes();
  res.final_recall = tracker.recall();
  res.converged = !res.records.empty() && res.records.back().converged;
  return res;
}

// --- Random baseline ----------------------------------------------------------
// Uniform without replacement across the whole run. Enumerable spaces use a
// single global shuffle sliced per round (exact); non-enumerable spaces use
// rejection sampling, where collisions are vanishingly rare.
inline RunResult run_random_baseline(RunContext& ctx,
                                     const std::string& resume_checkpoint =
                                         "") {
  const RunConfig& cfg = ctx.cfg;
  const ProductSpace& space = *ctx.space;
  RngStream root(cfg.seed);

  RunResult res;
  res.ledger = std::make_unique<ScoreLedger>(cfg.budget());
  ScoreLedger& ledger = *res.ledger;
  detail::RunSink sink(cfg, space);
  detail::RecallTracker tracker(ctx.truth, cfg.ground_truth_k);
  const std::uint64_t top_k =
      cfg.ground_truth_k > 0 ? cfg.ground_truth_k : cfg.per_round;

  int start_round = 1;
  if (!resume_checkpoint.empty()) {
    start_round = load_checkpoint(resume_checkpoint, cfg, ledger) + 1;
    tracker.observe_ledger(ledger);
  }

  const bool enumerable =
      space.size_known() && space.total_size() <= cfg.enumeration_cap;
  std::vector<std::uint64_t> global_order;
  if (enumerable) {
    global_order.resize(space.total_size());
    for (std::uint64_t i = 0; i < global_order.size(); ++i) {
      global_order[i] = i;
    }
    Sampler s(root.child("random-order"));
    s.shuffle(global_order);
  }

  for (int round = start_round; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    std::vector<Candidate> batch;
    const std::uint64_t quota =
        detail::round_quota(space, ledger, cfg.per_round);
    const auto t0 = detail::Clock::now();
    if (enumerable) {
      const std::uint64_t lo =
          static_cast<std::uint64_t>(round - 1) * cfg.per_round;
      for (std::uint64_t i = lo;
           i < global_order.size() && batch.size() < quota; ++i) {
        batch.push_back(detail::linear_to_candidate(space, global_order[i]));
      }
      rec.attempts = batch.size();
      rec.converged = batch.size() < cfg.per_round;
    } else {
      const RngStream rs =
          root.child("random-round", static_cast<std::uint64_t>(round));
      std::unordered_set<Candidate, CandidateHash> in_batch;
      const std::uint64_t max_attempts =
          std::max<std::uint64_t>(1000, 100 * quota);
      std::uint64_t attempts = 0;
      std::uint64_t counter = 0;
      while (batch.size() < quota && attempts < max_attempts) {
        ++attempts;
        Candidate c;
        c.indices.resize(space.n_vectors());
        for (std::size_t v = 0; v < space.n_vectors(); ++v) {
          c.indices[v] = static_cast<std::uint32_t>(
              rs.uniform_below(counter++, space.set(v).size()));
        }
        if (ledger.contains(c) || in_batch.contains(c)) continue;
        in_batch.insert(c);
        batch.push_back(std::move(c));
      }
      rec.attempts = attempts;
      rec.converged = batch.size() < cfg.per_round;
    }
    rec.timings.acquisition = detail::seconds_since(t0);

    if (!batch.empty()) {
      const auto ts = detail::Clock::now();
      auto scored = ledger.score_batch(*ctx.objective, batch);
      rec.timings.scoring = detail::seconds_since(ts);
      for (auto& [cand, score] : scored) {
        tracker.observe(cand);
        rec.acquired.push_back(std::move(cand));
        rec.scores.push_back(score);
      }
    }
    detail::finish_record(rec, ledger, tracker, top_k);
    rec.checkpoint_path = detail::write_checkpoint(sink, cfg, ledger, round);
    res.timings += rec.timings;
    sink.append_record(rec);
    res.records.push_back(std::move(rec));
    if (res.records.back().converged) break;
  }

  res.final_recall = tracker.recall();
  res.converged = !res.records.empty() && res.records.back().converged;
  return res;
}

// --- Tabular Thompson sampling -------------------------------------------------
// Warm-up scores every item of every vector `warmup_trials` times against
// random complements (excluded from the budget, recorded as round 0), then N
// rounds of exact-posterior Thompson sampling.
inline RunResult run_tabular_ts(RunContext& ctx,
                                const std::string& resume_checkpoint = "") {
  const RunConfig& cfg = ctx.cfg;
  const ProductSpace& space = *ctx.space;
  RngStream root(cfg.seed);
  const StrategyConfig strategy = make_strategy_config(cfg.strategy);

  TabularGaussianModel model =
      cfg.tabular.prior == "fixed"
          ? TabularGaussianModel(TabularGaussianModel::Prior{
                cfg.tabular.prior_mean, cfg.tabular.prior_var,
                cfg.tabular.obs_var})
          : TabularGaussianModel();

  RunResult res;
  res.ledger = std::make_unique<ScoreLedger>(cfg.budget());
  ScoreLedger& ledger = *res.ledger;
  detail::RunSink sink(cfg, space);
  detail::RecallTracker tracker(ctx.truth, cfg.ground_truth_k);
  const std::uint64_t top_k =
      cfg.ground_truth_k > 0 ? cfg.ground_truth_k : cfg.per_round;

  int start_round = 0;
  if (!resume_checkpoint.empty()) {
    start_round = load_checkpoint(resume_checkpoint, cfg, ledger) + 1;
    tracker.observe_ledger(ledger);
  }

  if (start_round == 0) {
    // Warm-up pass construction: per pass, every vector contributes a
    // permutation stream of length L = max pool size; positions are zipped
    // and collisions patched by swapping within the last vector's remaining
    // sequence, which preserves per-pass coverage exactly.
    std::uint64_t max_pool = 0;
    for (std::size_t v = 0; v < space.n_vectors(); ++v) {
      max_pool = std::max<std::uint64_t>(max_pool, space.set(v).size());
    }
    const std::uint64_t warmup_total =
        static_cast<std::uint64_t>(cfg.tabular.warmup_trials) * max_pool;
    if (space.size_known() && warmup_total > space.total_size()) {
      throw ConfigError("tabular warm-up needs " +
                        std::to_string(warmup_total) +
                        " distinct molecules but the space has only " +
                        std::to_string(space.total_size()));
    }
    RoundRecord rec;
    rec.round = 0;
    std::vector<Candidate> warmup;
    std::unordered_set<Candidate, CandidateHash> seen;
    const auto t0 = detail::Clock::now();
    for (int pass = 0; pass < cfg.tabular.warmup_trials; ++pass) {
      const RngStream ps =
          root.child("warmup", static_cast<std::uint64_t>(pass));
      std::vector<std::vector<std::uint32_t>> seq(space.n_vectors());
      for (std::size_t v = 0; v < space.n_vectors(); ++v) {
        std::vector<std::uint32_t> perm(space.set(v).size());
        std::uint64_t chunk = 0;
        while (seq[v].size() < max_pool) {
          for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
          Sampler s(ps.child("vector", v).child_index(chunk++));
          s.shuffle(perm);
          for (std::uint32_t idx : perm) {
            if (seq[v].size() == max_pool) break;
            seq[v].push_back(idx);
          }
        }
      }
      const std::size_t last = space.n_vectors() - 1;
      for (std::uint64_t t = 0; t < max_pool; ++t) {
        Candidate c;
        c.indices.resize(space.n_vectors());
        for (std::size_t v = 0; v < space.n_vectors(); ++v) {
          c.indices[v] = seq[v][t];
        }
        if (seen.contains(c)) {
          bool patched = false;
          for (std::uint64_t t2 = t + 1; t2 < max_pool; ++t2) {
            std::swap(c.indices[last], seq[last][t2]);
            if (!seen.contains(c)) {
              seq[last][t] = c.indices[last];
              patched = true;
              break;
            }
            std::swap(c.indices[last], seq[last][t2]);  // undo
          }
          if (!patched) {
            throw Error("tabular warm-up could not assemble distinct "
                        "molecules; the space is too exhausted");
          }
        }
        seen.insert(c);
        warmup.push_back(std::move(c));
      }
    }
    rec.attempts = warmup.size();
    rec.timings.acquisition = detail::seconds_since(t0);
    {
      const auto ts = detail::Clock::now();
      auto scored = ledger.score_batch(*ctx.objective, warmup,
                                       ScoreLedger::Budget::exempt);
      rec.timings.scoring = detail::seconds_since(ts);
      for (auto& [cand, score] : scored) {
        tracker.observe(cand);
        rec.acquired.push_back(std::move(cand));
        rec.scores.push_back(score);
      }
    }
    detail::finish_record(rec, ledger, tracker, top_k);
    rec.checkpoint_path = detail::write_checkpoint(sink, cfg, ledger, 0);
    res.timings += rec.timings;
    sink.append_record(rec);
    res.records.push_back(std::move(rec));
    start_round = 1;
  }

  for (int round = start_round; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    std::vector<Candidate> batch;
    const std::uint64_t quota =
        detail::round_quota(space, ledger, cfg.per_round);
    if (quota == 0) {
      rec.converged = true;
    } else {
      {
        const auto t0 = detail::Clock::now();
        SynthonDataset data = SynthonDataset::from_entries(ledger.entries());
        model.fit(space, data);
        rec.timings.training = detail::seconds_since(t0);
      }
      std::vector<std::vector<GaussianPrediction>> preds(space.n_vectors());
      {
        const auto t0 = detail::Clock::now();
        for (std::size_t v = 0; v < space.n_vectors(); ++v) {
          preds[v] = model.predict_all(static_cast<int>(v));
        }
        rec.timings.inference = detail::seconds_since(t0);
      }
      {
        const auto t0 = detail::Clock::now();
        RoundSample rs = sample_round(
            strategy, preds, ledger, quota, cfg.effective_rho_max(),
            ledger.best_score(),
            root.child("round", static_cast<std::uint64_t>(round))
                .child("acquire"));
        batch = std::move(rs.candidates);
        rec.attempts = rs.attempts;
        rec.converged = rs.converged;
        rec.timings.acquisition = detail::seconds_since(t0);
      }
    }
    if (!batch.empty()) {
      const auto ts = detail::Clock::now();
      auto scored = ledger.score_batch(*ctx.objective, batch);
      rec.timings.scoring = detail::seconds_since(ts);
      for (auto& [cand, score] : scored) {
        tracker.observe(cand);
        rec.acquired.push_back(std::move(cand));
        rec.scores.push_back(score);
      }
    }
    detail::finish_record(rec, ledger, tracker, top_k);
    rec.checkpoint_path = detail::write_checkpoint(sink, cfg, ledger, round);
    res.timings += rec.timings;
    sink.append_record(rec);
    res.records.push_back(std::move(rec));
    if (res.records.back().converged) break;
  }

  res.final_recall = tracker.recall();
  res.converged = !res.records.empty() && res.records.back().converged;
  return res;
}

// --- Full-molecular pool AL ---------------------------------------------------
// Enumerates the whole product space, trains one regressor on concatenated
// per-vector features, and greedily takes the top-K unseen candidates by
// predicted mean each round. Inference cost per round is the number of
// unseen candidates — the product-space price SALSA avoids.
inline RunResult run_pool_al(RunContext& ctx,
                             const std::string& resume_checkpoint = "") {
  const RunConfig& cfg = ctx.cfg;
  const ProductSpace& space = *ctx.space;
  if (!space.size_known() || space.total_size() > cfg.enumeration_cap) {
    throw ConfigError("pool-al requires an enumerable space (<= " +
                      std::to_string(cfg.enumeration_cap) + " candidates)");
  }
  const std::uint64_t total = space.total_size();
  const int d = space.feature_dim();
  const int D = d * static_cast<int>(space.n_vectors());
  RngStream root(cfg.seed);

  MveRegressorConfig reg_cfg = make_surrogate_config(cfg.surrogate).regressor;
  MveRegressor regressor(D, reg_cfg);

  RunResult res;
  res.ledger = std::make_unique<ScoreLedger>(cfg.budget());
  ScoreLedger& ledger = *res.ledger;
  detail::RunSink sink(cfg, space);
  detail::RecallTracker tracker(ctx.truth, cfg.ground_truth_k);
  const std::uint64_t top_k =
      cfg.ground_truth_k > 0 ? cfg.ground_truth_k : cfg.per_round;

  int start_round = 1;
  if (!resume_checkpoint.empty()) {
    start_round = load_checkpoint(resume_checkpoint, cfg, ledger) + 1;
    tracker.observe_ledger(ledger);
  }

  auto fill_features = [&](const Candidate& c, Eigen::MatrixXd& X,
                           std::int64_t row) {
    for (std::size_t v = 0; v < c.indices.size(); ++v) {
      auto f = space.set(v).features_of(c.indices[v]);
      for (std::size_t k = 0; k < f.size(); ++k) {
        X(row, static_cast<std::int64_t>(v * f.size() + k)) = f[k];
      }
    }
  };

  for (int round = start_round; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    std::vector<Candidate> batch;
    const std::uint64_t passes_before = regressor.inference_passes();
    const std::uint64_t quota =
        detail::round_quota(space, ledger, cfg.per_round);

    if (round == 1) {
      const auto t0 = detail::Clock::now();
      Sampler s(root.child("init"));
      for (std::uint32_t idx : s.sample_indices(total, quota)) {
        batch.push_back(detail::linear_to_candidate(space, idx));
      }
      rec.attempts = batch.size();
      rec.timings.acquisition = detail::seconds_since(t0);
    } else if (quota == 0) {
      rec.converged = true;
    } else {
      {
        const auto t0 = detail::Clock::now();
        const auto& entries = ledger.entries();
        Eigen::MatrixXd X(static_cast<std::int64_t>(entries.size()), D);
        Eigen::VectorXd y(static_cast<std::int64_t>(entries.size()));
        for (std::size_t i = 0; i < entries.size(); ++i) {
          fill_features(entries[i].first, X, static_cast<std::int64_t>(i));
          y(static_cast<std::int64_t>(i)) = entries[i].second;
        }
        regressor.fit(X, y,
                      root.child("round", static_cast<std::uint64_t>(round))
                          .child("fit"));
        rec.timings.training = detail::seconds_since(t0);
      }
      {
        // Predict every unseen candidate, keep the top `quota` by mean;
        // ties broken toward the lower linear index for determinism.
        const auto t0 = detail::Clock::now();
        using Entry = std::pair<double, std::uint64_t>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> top;
        constexpr std::int64_t kChunk = 8192;
        Eigen::MatrixXd X(kChunk, D);
        std::vector<std::uint64_t> linear_ids;
        linear_ids.reserve(kChunk);
        std::int64_t fill = 0;
        auto flush = [&]() {
          if (fill == 0) return;
          Eigen::MatrixXd block = X.topRows(fill);
          auto preds = regressor.predict(block);
          for (std::int64_t i = 0; i < fill; ++i) {
            // Negate the index so that among equal means the smaller linear
            // index compares greater and survives the min-heap.
            Entry e{preds[static_cast<std::size_t>(i)].mean,
                    ~linear_ids[static_cast<std::size_t>(i)]};
            if (top.size() < quota) {
              top.push(e);
            } else if (top.top() < e) {
              top.pop();
              top.push(e);
            }
          }
          fill = 0;
          linear_ids.clear();
        };
        for (std::uint64_t m = 0; m < total; ++m) {
          Candidate c = detail::linear_to_candidate(space, m);
          if (ledger.contains(c)) continue;
          fill_features(c, X, fill);
          linear_ids.push_back(m);
          ++fill;
          if (fill == kChunk) flush();
        }
        flush();
        rec.timings.inference = detail::seconds_since(t0);
        const auto ta = detail::Clock::now();
        std::vector<std::uint64_t> chosen;
        while (!top.empty()) {
          chosen.push_back(~top.top().second);
          top.pop();
        }
        // Heap pops ascending; emit best-first for the record.
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
          batch.push_back(detail::linear_to_candidate(space, *it));
        }
        rec.attempts = batch.size();
        rec.converged = batch.size() < cfg.per_round;
        rec.timings.acquisition = detail::seconds_since(ta);
      }
    }

    if (!batch.empty()) {
      const auto ts = detail::Clock::now();
      auto scored = ledger.score_batch(*ctx.objective, batch);
      rec.timings.scoring = detail::seconds_since(ts);
      for (auto& [cand, score] : scored) {
        tracker.observe(cand);
        rec.acquired.push_back(std::move(cand));
        rec.scores.push_back(score);
      }
    }
    rec.inference_passes = regressor.inference_passes() - passes_before;
    detail::finish_record(rec, ledger, tracker, top_k);
    rec.checkpoint_path = detail::write_checkpoint(sink, cfg, ledger, round);
    res.timings += rec.timings;
    sink.append_record(rec);
    res.records.push_back(std::move(rec));
    if (res.records.back().converged) break;
  }

  res.inference_passes = regressor.inference_passes();
  res.final_recall = tracker.recall();
  res.converged = !res.records.empty() && res.records.back().converged;
  return res;
}

inline RunResult run_any(RunContext& ctx,
                         const std::string& resume_checkpoint = "") {
  switch (parse_method(ctx.cfg.method)) {
    case Method::salsa: return run_salsa(ctx, resume_checkpoint);
    case Method::random: return run_random_baseline(ctx, resume_checkpoint);
    case Method::tabular_ts: return run_tabular_ts(ctx, resume_checkpoint);
    case Method::pool_al: return run_pool_al(ctx, resume_checkpoint);
  }
  throw Error("unreachable method dispatch");
}

// Post-run exports: recall curve, per-round top-k stats, and the run summary.
inline void write_run_outputs(const RunConfig& cfg, const ProductSpace& space,
                              const RunResult& res) {
  if (cfg.output_dir.empty()) return;
  const std::string dir = cfg.output_dir;
  if (res.final_recall >= 0) {
    std::vector<RecallPoint> curve;
    for (const auto& r : res.records) {
      curve.push_back({r.ledger_size, r.recall});
    }
    write_recall_curve(dir + "/recall_curve.tsv", curve);
  }
  std::vector<TopKRoundRow> topk;
  for (const auto& r : res.records) {
    topk.push_back(
        {r.round, r.ledger_size, r.top_stats.min, r.top_stats.max,
         r.top_stats.mean});
  }
  write_topk_rounds(dir + "/topk_rounds.tsv", topk);

  json summary{
      {"method", cfg.method},
      {"seed", cfg.seed},
      {"rounds_run", res.records.size()},
      {"budget", cfg.budget()},
      {"counted_calls", res.ledger->total_calls()},
      {"ledger_size", res.ledger->size()},
      {"best_score", res.ledger->empty() ? 0.0 : res.ledger->best_score()},
      {"final_recall", res.final_recall},
      {"converged", res.converged},
      {"inference_passes", res.inference_passes},
      {"space_pools", json::array()},
      {"timings",
       {{"scoring_s", res.timings.scoring},
        {"training_s", res.timings.training},
        {"inference_s", res.timings.inference},
        {"acquisition_s", res.timings.acquisition},
        {"overall_s", res.timings.overall()}}}};
  for (std::size_t v = 0; v < space.n_vectors(); ++v) {
    summary["space_pools"].push_back(space.set(v).size());
  }
  std::ofstream out(dir + "/summary.json");
  if (!out) throw IoError("cannot write summary to '" + dir + "'");
  out << summary.dump(2) << "\n";
  if (!out) throw IoError("summary write failed");
}

}  // namespace salsa
