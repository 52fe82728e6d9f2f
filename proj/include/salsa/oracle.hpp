#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/rng.hpp"
#include "salsa/space.hpp"

namespace salsa {

// An expensive molecular objective f: Candidate -> R. Implementations must be
// deterministic given (candidate, oracle seed); the call counter advances by
// batch size, once per unique candidate scored.
class ObjectiveFn {
 public:
  virtual ~ObjectiveFn() = default;

  std::vector<double> score_batch(std::span<const Candidate> candidates) {
    calls_ += candidates.size();
    return do_score(candidates);
  }

  double score_one(const Candidate& c) {
    return score_batch(std::span<const Candidate>(&c, 1)).front();
  }

  virtual std::string descriptor() const = 0;
  std::uint64_t calls() const { return calls_; }

 protected:
  virtual std::vector<double> do_score(std::span<const Candidate>) = 0;

 private:
  std::uint64_t calls_ = 0;
};

struct SyntheticOracleSpec {
  enum class Kind { additive, bilinear, noisy_additive };
  Kind kind = Kind::additive;
  std::uint64_t seed = 0;
  double noise_std = 0.0;      // noisy_additive only
  double lambda = 0.0;         // bilinear interaction strength
  // Optional explicit per-vector utility weight vectors (length d each);
  // generated from the seed when empty.
  std::vector<std::vector<double>> utilities;
};

// f(s0,..,sn) = sum_i u_i . x_i (+ lambda * x0^T W x1 for bilinear,
// + N(0, noise_std) frozen per candidate for noisy_additive).
// Per-item utilities are precomputed so scoring is O(n) per candidate.
class SyntheticOracle : public ObjectiveFn {
 public:
  SyntheticOracle(SyntheticOracleSpec spec,
                  std::shared_ptr<const ProductSpace> space)
      : spec_(std::move(spec)), space_(std::move(space)) {
    if (spec_.noise_std < 0) throw ConfigError("noise std must be >= 0");
    const int d = space_->feature_dim();
    RngStream root(spec_.seed);
    weights_.resize(space_->n_vectors());
    for (std::size_t v = 0; v < space_->n_vectors(); ++v) {
      if (!spec_.utilities.empty()) {
        if (spec_.utilities.size() != space_->n_vectors() ||
            static_cast<int>(spec_.utilities[v].size()) != d) {
          throw ConfigError(
              "oracle utilities must be one length-d vector per space vector");
        }
        weights_[v] = spec_.utilities[v];
      } else {
        RngStream ws = root.child("utility").child_index(v);
        weights_[v].resize(d);
        for (int k = 0; k < d; ++k) weights_[v][k] = ws.uniform01(k);
      }
    }
    // Per-item linear utilities.
    item_utility_.resize(space_->n_vectors());
    for (std::size_t v = 0; v < space_->n_vectors(); ++v) {
      const SynthonSet& set = space_->set(v);
      item_utility_[v].resize(set.size());
      for (std::size_t j = 0; j < set.size(); ++j) {
        auto f = set.features_of(j);
        double dot = 0;
        for (int k = 0; k < d; ++k) dot += weights_[v][k] * f[k];
        item_utility_[v][j] = dot;
      }
    }
    if (spec_.kind == SyntheticOracleSpec::Kind::bilinear) {
      if (space_->n_vectors() != 2) {
        throw ConfigError("bilinear oracle is defined for 2-vector spaces");
      }
      // W is d x d with entries uniform(-1,1); x0^T W precomputed per item.
      RngStream wm = root.child("interaction");
      interaction_.resize(static_cast<std::size_t>(d) * d);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          interaction_[r * d + c] =
              2.0 * wm.uniform01(static_cast<std::uint64_t>(r) * d + c) - 1.0;
        }
      }
      const SynthonSet& s0 = space_->set(0);
      cross_.resize(s0.size() * static_cast<std::size_t>(d));
      for (std::size_t j = 0; j < s0.size(); ++j) {
        auto x0 = s0.features_of(j);
        for (int c = 0; c < d; ++c) {
          double acc = 0;
          for (int r = 0; r < d; ++r) acc += x0[r] * interaction_[r * d + c];
          cross_[j * d + c] = acc;
        }
      }
    }
  }

  std::string descriptor() const override {
    switch (spec_.kind) {
      case SyntheticOracleSpec::Kind::additive: return "additive";
      case SyntheticOracleSpec::Kind::bilinear: return "bilinear";
      case SyntheticOracleSpec::Kind::noisy_additive: return "noisy-additive";
    }
    return "?";
  }

  const SyntheticOracleSpec& spec() const { return spec_; }
  const std::vector<std::vector<double>>& utility_weights() const {
    return weights_;
  }
  const std::vector<double>& item_utilities(std::size_t v) const {
    return item_utility_.at(v);
  }

 protected:
  std::vector<double> do_score(std::span<const Candidate> batch) override {
    std::vector<double> out;
    out.reserve(batch.size());
    const RngStream noise = RngStream(spec_.seed).child("score-noise");
    const int d = space_->feature_dim();
    for (const Candidate& c : batch) {
      if (c.indices.size() != space_->n_vectors()) {
        throw ConfigError("candidate arity does not match space");
      }
      double y = 0;
      for (std::size_t v = 0; v < c.indices.size(); ++v) {
        y += item_utility_[v].at(c.indices[v]);
      }
      if (spec_.kind == SyntheticOracleSpec::Kind::bilinear &&
          spec_.lambda != 0.0) {
        auto x1 = space_->set(1).features_of(c.indices[1]);
        const double* w = &cross_[c.indices[0] * static_cast<std::size_t>(d)];
        double inter = 0;
        for (int k = 0; k < d; ++k) inter += w[k] * x1[k];
        y += spec_.lambda * inter;
      }
      if (spec_.kind == SyntheticOracleSpec::Kind::noisy_additive &&
          spec_.noise_std > 0) {
        y += spec_.noise_std * noise.normal(candidate_key(c));
      }
      out.push_back(y);
    }
    return out;
  }

 private:
  SyntheticOracleSpec spec_;
  std::shared_ptr<const ProductSpace> space_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> item_utility_;
  std::vector<double> interaction_;  // d x d, row-major
  std::vector<double> cross_;        // |S0| x d, x0^T W rows
};

// Linear multi-parameter objective: sum_i w_i * clamp((f_i - lo_i)/(hi_i -
// lo_i), 0, 1). Weights are applied as given (2:1 means 2 and 1).
struct MpoComponent {
  std::shared_ptr<ObjectiveFn> objective;
  double weight = 1.0;
  double lo = 0.0;
  double hi = 1.0;
};

class MpoObjective : public ObjectiveFn {
 public:
  explicit MpoObjective(std::vector<MpoComponent> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw ConfigError("MPO needs >= 1 component");
    for (const auto& c : components_) {
      if (c.weight <= 0) throw ConfigError("MPO weights must be > 0");
      if (c.hi <= c.lo) throw ConfigError("MPO scale needs hi > lo");
    }
  }

  std::string descriptor() const override {
    std::string s = "mpo(";
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (i) s += ",";
      s += components_[i].objective->descriptor();
    }
    return s + ")";
  }

 protected:
  std::vector<double> do_score(std::span<const Candidate> batch) override {
    std::vector<double> out(batch.size(), 0.0);
    for (const auto& comp : components_) {
      std::vector<double> raw = comp.objective->score_batch(batch);
      const double span = comp.hi - comp.lo;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        double scaled = (raw[i] - comp.lo) / span;
        scaled = std::clamp(scaled, 0.0, 1.0);
        out[i] += comp.weight * scaled;
      }
    }
    return out;
  }

 private:
  std::vector<MpoComponent> components_;
};

inline double mpo_score(MpoObjective& mpo, const Candidate& c) {
  return mpo.score_one(c);
}

// Deduplicated record of scored candidates plus budget accounting. Total
// budgeted calls never exceed the N x K cap; warm-up scoring for the tabular
// baseline is recorded but exempt.
class ScoreLedger {
 public:
  enum class Budget { counted, exempt };

  explicit ScoreLedger(std::uint64_t budget) : budget_(budget) {}

  std::uint64_t budget() const { return budget_; }
  std::uint64_t total_calls() const { return total_calls_; }
  std::uint64_t remaining() const { return budget_ - total_calls_; }
  std::size_t size() const { return entries_.size(); }

  bool contains(const Candidate& c) const { return index_.contains(c); }

  std::optional<double> lookup(const Candidate& c) const {
    auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  double best_score() const {
    if (entries_.empty()) throw Error("ledger is empty");
    return best_;
  }
  bool empty() const { return entries_.empty(); }

  // Insertion-ordered view; the basis for datasets, records and checkpoints.
  const std::vector<std::pair<Candidate, double>>& entries() const {
    return entries_;
  }
  const std::vector<std::uint8_t>& exempt_flags() const { return exempt_; }

  std::vector<std::pair<Candidate, double>> score_batch(
      ObjectiveFn& objective, std::span<const Candidate> candidates,
      Budget policy = Budget::counted) {
    std::unordered_set<Candidate, CandidateHash> in_batch;
    in_batch.reserve(candidates.size());
    for (const Candidate& c : candidates) {
      if (index_.contains(c)) {
        throw DuplicateCandidateError("candidate already scored");
      }
      if (!in_batch.insert(c).second) {
        throw DuplicateCandidateError("duplicate candidate within batch");
      }
    }
    if (policy == Budget::counted &&
        total_calls_ + candidates.size() > budget_) {
      throw BudgetExhaustedError(
          "scoring " + std::to_string(candidates.size()) +
          " candidates would exceed budget (" + std::to_string(total_calls_) +
          "/" + std::to_string(budget_) + " used)");
    }
    std::vector<double> scores = objective.score_batch(candidates);
    std::vector<std::pair<Candidate, double>> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      record(candidates[i], scores[i], policy);
      out.emplace_back(candidates[i], scores[i]);
    }
    return out;
  }

  // Replay path: reinstate an already-scored entry (checkpoint load).
  void record(const Candidate& c, double score, Budget policy) {
    if (policy == Budget::counted && total_calls_ + 1 > budget_) {
      throw BudgetExhaustedError("budget exhausted");
    }
    if (!index_.emplace(c, score).second) {
      throw DuplicateCandidateError("candidate already scored");
    }
    if (policy == Budget::counted) ++total_calls_;
    entries_.emplace_back(c, score);
    exempt_.push_back(policy == Budget::exempt ? 1 : 0);
    if (entries_.size() == 1 || score > best_) best_ = score;
  }

 private:
  std::uint64_t budget_;
  std::uint64_t total_calls_ = 0;
  double best_ = 0;
  std::unordered_map<Candidate, double, CandidateHash> index_;
  std::vector<std::pair<Candidate, double>> entries_;
  std::vector<std::uint8_t> exempt_;
};

// Exhaustive enumeration of an enumerable space; the DERIVED-oracle side of
// recall metrics. Never touches a ledger or budget.
constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

inline std::vector<std::pair<Candidate, double>> brute_force_ground_truth(
    const ProductSpace& space, ObjectiveFn& objective, std::uint64_t k,
    std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  if (!space.size_known() || space.total_size() > enumeration_cap) {
    throw ConfigError("space too large to enumerate for ground truth");
  }
  const std::uint64_t total = space.total_size();
  if (k == 0) throw ConfigError("ground truth k must be >= 1");
  if (k > total) k = total;

  std::vector<std::pair<Candidate, double>> all;
  all.reserve(total);
  std::vector<std::uint32_t> idx(space.n_vectors(), 0);
  const std::size_t chunk = 8192;
  std::vector<Candidate> batch;
  batch.reserve(chunk);
  bool done = false;
  while (!done) {
    batch.clear();
    while (batch.size() < chunk && !done) {
      batch.emplace_back(idx);
      // odometer increment, last vector fastest
      for (std::size_t v = space.n_vectors(); v-- > 0;) {
        if (++idx[v] < space.set(v).size()) break;
        idx[v] = 0;
        if (v == 0) done = true;
      }
    }
    std::vector<double> scores = objective.score_batch(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      all.emplace_back(std::move(batch[i]), scores[i]);
    }
  }
  // Descending score; ties by ascending lexicographic indices.
  auto cmp = [](const std::pair<Candidate, double>& a,
                const std::pair<Candidate, double>& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k),
                    all.end(), cmp);
  all.resize(k);
  return all;
}

}  // namespace salsa
