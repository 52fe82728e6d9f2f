#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace salsa {

// Counter-based random number generation.
//
// Every random quantity in a run is a pure function of
// (run seed, substream labels, counter). Substreams are derived by name so
// that, e.g., the acquisition draws of round 7 / vector 1 never depend on how
// many numbers any other part of the run consumed. This is what makes runs
// replayable from a checkpoint and independent of evaluation order.

namespace detail {

// SplitMix64 finalizer; also a solid 64-bit mixer.
constexpr inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  // Derive a named substream. Derivation is associative-free: each child mixes
  // the parent key with the label hash, so distinct label paths give
  // independent streams.
  RngStream child(std::string_view label) const {
    return RngStream(detail::mix64(key_ ^ detail::fnv1a(label)));
  }
  RngStream child(std::string_view label, std::uint64_t index) const {
    return child(label).child_index(index);
  }
  RngStream child_index(std::uint64_t index) const {
    return RngStream(detail::mix64(key_ ^ detail::mix64(index ^ 0xa5a5a5a5a5a5a5a5ULL)));
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t bits(std::uint64_t counter) const {
    return detail::mix64(key_ ^ detail::mix64(counter));
  }

  // Uniform in [0, 1).
  double uniform01(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1), never returning an endpoint. Used for Box-Muller.
  double uniform_open(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  std::uint64_t uniform_below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  // Standard normal via Box-Muller. One counter per draw.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform_open(2 * counter);
    const double u2 = uniform_open(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Stateful view over a stream for sequential consumption (shuffles etc.).
class Sampler {
 public:
  explicit Sampler(RngStream stream) : stream_(stream) {}

  double uniform01() { return stream_.uniform01(counter_++); }
  double normal() { return stream_.normal(counter_++); }
  std::uint64_t uniform_below(std::uint64_t n) {
    return stream_.uniform_below(counter_++, n);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), returned in ascending order.
  std::vector<std::uint32_t> sample_indices(std::uint64_t n, std::uint64_t k);

 private:
  RngStream stream_;
  std::uint64_t counter_ = 0;
};

inline std::vector<std::uint32_t> Sampler::sample_indices(std::uint64_t n,
                                                          std::uint64_t k) {
  std::vector<std::uint32_t> pool(n);
  for (std::uint64_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);
  // Partial Fisher-Yates: settle the first k slots only.
  for (std::uint64_t i = 0; i < k; ++i) {
    std::uint64_t j = i + uniform_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace salsa
