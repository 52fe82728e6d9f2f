#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/rng.hpp"

namespace salsa {

// Ordered pool of items selectable at one attachment vector. Features are
// stored in one flat row-major buffer so a pool of millions of items costs a
// single allocation plus the id strings.
struct SynthonSet {
  int vector_index = 0;
  int feature_dim = 0;
  std::vector<std::string> ids;
  std::vector<double> features;  // size == ids.size() * feature_dim

  std::size_t size() const { return ids.size(); }

  std::span<const double> features_of(std::size_t item) const {
    return {features.data() + item * static_cast<std::size_t>(feature_dim),
            static_cast<std::size_t>(feature_dim)};
  }

  void validate() const {
    if (ids.empty()) {
      throw ConfigError("synthon set " + std::to_string(vector_index) +
                        " is empty");
    }
    if (feature_dim <= 0) {
      throw ConfigError("synthon set " + std::to_string(vector_index) +
                        " has non-positive feature dim");
    }
    if (features.size() != ids.size() * static_cast<std::size_t>(feature_dim)) {
      throw ConfigError("synthon set " + std::to_string(vector_index) +
                        " feature buffer does not match item count");
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
      if (!seen.insert(id).second) {
        throw ConfigError("duplicate item id '" + id + "' in synthon set " +
                          std::to_string(vector_index));
      }
    }
  }
};

// One point of the product space: a tuple of per-vector item indices.
struct Candidate {
  std::vector<std::uint32_t> indices;

  Candidate() = default;
  explicit Candidate(std::vector<std::uint32_t> idx) : indices(std::move(idx)) {}

  bool operator==(const Candidate& other) const = default;
  auto operator<=>(const Candidate& other) const = default;
};

struct CandidateHash {
  std::size_t operator()(const Candidate& c) const {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint32_t i : c.indices) h = detail::mix64(h ^ i);
    return static_cast<std::size_t>(h);
  }
};

// A 64-bit mixing of the index tuple, used to key per-candidate noise draws.
inline std::uint64_t candidate_key(const Candidate& c) {
  std::uint64_t h = 0x452821e638d01377ULL;
  for (std::uint32_t i : c.indices) h = detail::mix64(h ^ i);
  return h;
}

// The implied product of per-vector pools. Never materializes candidates:
// memory is O(sum of pool sizes x feature dim).
class ProductSpace {
 public:
  explicit ProductSpace(std::vector<SynthonSet> sets) : sets_(std::move(sets)) {
    if (sets_.size() < 2) {
      throw ConfigError("a product space needs at least 2 synthon sets, got " +
                        std::to_string(sets_.size()));
    }
    int dim = -1;
    for (std::size_t v = 0; v < sets_.size(); ++v) {
      sets_[v].vector_index = static_cast<int>(v);
      sets_[v].validate();
      if (dim < 0) dim = sets_[v].feature_dim;
      if (sets_[v].feature_dim != dim) {
        throw ConfigError(
            "inconsistent feature dims across synthon sets: " +
            std::to_string(dim) + " vs " +
            std::to_string(sets_[v].feature_dim) + " at vector " +
            std::to_string(v));
      }
    }
    // Checked product; overflow is reported as the astronomical flag rather
    // than a wrapped size.
    std::uint64_t total = 1;
    size_known_ = true;
    for (const auto& s : sets_) {
      if (__builtin_mul_overflow(total, static_cast<std::uint64_t>(s.size()),
                                 &total)) {
        size_known_ = false;
        total = 0;
        break;
      }
    }
    total_size_ = total;
  }

  std::size_t n_vectors() const { return sets_.size(); }
  const SynthonSet& set(std::size_t v) const { return sets_.at(v); }
  const std::vector<SynthonSet>& sets() const { return sets_; }
  int feature_dim() const { return sets_.front().feature_dim; }

  // False means the product overflows 64 bits ("astronomical").
  bool size_known() const { return size_known_; }
  std::uint64_t total_size() const {
    if (!size_known_) {
      throw Error("product space size is astronomical (overflows 64 bits)");
    }
    return total_size_;
  }

  std::uint64_t sum_of_pools() const {
    std::uint64_t s = 0;
    for (const auto& set : sets_) s += set.size();
    return s;
  }

  Candidate compose(std::span<const std::uint32_t> indices) const {
    if (indices.size() != sets_.size()) {
      throw ConfigError("compose: expected " + std::to_string(sets_.size()) +
                        " indices, got " + std::to_string(indices.size()));
    }
    for (std::size_t v = 0; v < indices.size(); ++v) {
      if (indices[v] >= sets_[v].size()) {
        throw ConfigError("compose: index " + std::to_string(indices[v]) +
                          " out of range for vector " + std::to_string(v) +
                          " (pool size " + std::to_string(sets_[v].size()) +
                          ")");
      }
    }
    return Candidate(std::vector<std::uint32_t>(indices.begin(), indices.end()));
  }

  struct ItemRef {
    int vector_index;
    std::uint32_t item_index;
    const std::string* id;
    std::span<const double> features;
  };

  std::vector<ItemRef> decompose(const Candidate& c) const {
    if (c.indices.size() != sets_.size()) {
      throw ConfigError("decompose: candidate arity mismatch");
    }
    std::vector<ItemRef> out;
    out.reserve(c.indices.size());
    for (std::size_t v = 0; v < c.indices.size(); ++v) {
      std::uint32_t i = c.indices[v];
      if (i >= sets_[v].size()) {
        throw ConfigError("decompose: index out of range for vector " +
                          std::to_string(v));
      }
      out.push_back({static_cast<int>(v), i, &sets_[v].ids[i],
                     sets_[v].features_of(i)});
    }
    return out;
  }

  // Identity of a candidate that survives subsampling: the item_id tuple.
  std::vector<std::string> id_tuple(const Candidate& c) const {
    std::vector<std::string> out;
    out.reserve(c.indices.size());
    for (std::size_t v = 0; v < c.indices.size(); ++v) {
      out.push_back(sets_[v].ids.at(c.indices[v]));
    }
    return out;
  }

 private:
  std::vector<SynthonSet> sets_;
  std::uint64_t total_size_ = 0;
  bool size_known_ = true;
};

inline ProductSpace build_space(std::vector<SynthonSet> sets) {
  return ProductSpace(std::move(sets));
}

// Synthetic pools: item features iid uniform(0,1)^d from a seeded stream.
// Regeneration with the same (sizes, dim, seed) is byte-identical.
inline SynthonSet generate_synthon_set(int vector_index, std::uint64_t n_items,
                                       int feature_dim, std::uint64_t seed) {
  if (n_items == 0) throw ConfigError("cannot generate an empty synthon set");
  if (feature_dim <= 0) throw ConfigError("feature dim must be positive");
  SynthonSet set;
  set.vector_index = vector_index;
  set.feature_dim = feature_dim;
  set.ids.reserve(n_items);
  set.features.resize(n_items * static_cast<std::size_t>(feature_dim));
  RngStream stream =
      RngStream(seed).child("space-features").child_index(vector_index);
  char buf[32];
  for (std::uint64_t j = 0; j < n_items; ++j) {
    std::snprintf(buf, sizeof(buf), "s%d_%07llu", vector_index,
                  static_cast<unsigned long long>(j));
    set.ids.emplace_back(buf);
    for (int k = 0; k < feature_dim; ++k) {
      set.features[j * feature_dim + k] =
          stream.uniform01(j * static_cast<std::uint64_t>(feature_dim) + k);
    }
  }
  return set;
}

inline ProductSpace generate_space(const std::vector<std::uint64_t>& sizes,
                                   int feature_dim, std::uint64_t seed) {
  std::vector<SynthonSet> sets;
  sets.reserve(sizes.size());
  for (std::size_t v = 0; v < sizes.size(); ++v) {
    sets.push_back(
        generate_synthon_set(static_cast<int>(v), sizes[v], feature_dim, seed));
  }
  return build_space(std::move(sets));
}

// Deterministic without-replacement subsample; selected items keep their ids
// and original relative order.
inline ProductSpace subsample(const ProductSpace& space,
                              const std::vector<std::uint64_t>& counts,
                              std::uint64_t seed) {
  if (counts.size() != space.n_vectors()) {
    throw ConfigError("subsample: need one count per vector");
  }
  std::vector<SynthonSet> sets;
  sets.reserve(counts.size());
  for (std::size_t v = 0; v < counts.size(); ++v) {
    const SynthonSet& src = space.set(v);
    if (counts[v] > src.size()) {
      throw ConfigError("subsample: count " + std::to_string(counts[v]) +
                        " exceeds pool size " + std::to_string(src.size()) +
                        " at vector " + std::to_string(v));
    }
    if (counts[v] == 0) {
      throw ConfigError("subsample: count must be positive");
    }
    Sampler sampler(RngStream(seed).child("subsample").child_index(v));
    std::vector<std::uint32_t> picked =
        sampler.sample_indices(src.size(), counts[v]);
    SynthonSet out;
    out.vector_index = static_cast<int>(v);
    out.feature_dim = src.feature_dim;
    out.ids.reserve(picked.size());
    out.features.reserve(picked.size() * src.feature_dim);
    for (std::uint32_t idx : picked) {
      out.ids.push_back(src.ids[idx]);
      auto f = src.features_of(idx);
      out.features.insert(out.features.end(), f.begin(), f.end());
    }
    sets.push_back(std::move(out));
  }
  return build_space(std::move(sets));
}

// --- Columnar text format: one item per line, item_id then d reals. ---

inline void save_synthon_set(const SynthonSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  char buf[64];
  for (std::size_t j = 0; j < set.size(); ++j) {
    out << set.ids[j];
    auto f = set.features_of(j);
    for (double x : f) {
      std::snprintf(buf, sizeof(buf), " %.17g", x);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline SynthonSet load_synthon_set(const std::string& path, int vector_index) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open synthon file: " + path);
  SynthonSet set;
  set.vector_index = vector_index;
  set.feature_dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    if (id.empty()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": missing item id");
    }
    std::vector<double> feats;
    double x;
    while (ss >> x) feats.push_back(x);
    if (!ss.eof()) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": malformed feature value");
    }
    if (feats.empty()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": no features");
    }
    if (set.feature_dim == 0) {
      set.feature_dim = static_cast<int>(feats.size());
    } else if (static_cast<int>(feats.size()) != set.feature_dim) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": feature dim mismatch (expected " +
                    std::to_string(set.feature_dim) + ", got " +
                    std::to_string(feats.size()) + ")");
    }
    set.ids.push_back(std::move(id));
    set.features.insert(set.features.end(), feats.begin(), feats.end());
  }
  set.validate();
  return set;
}

}  // namespace salsa
