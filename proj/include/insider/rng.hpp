#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace insider {

// splitmix64 finalizer. Used to derive independent stream seeds so that any
// unit of parallel work (a tree, a repetition, a permuted column) owns its own
// generator and results do not depend on the thread schedule.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b,
                                  std::uint64_t c) {
  return hash_seed(hash_seed(a, b), c);
}

// Stream tags keep unrelated consumers of the same user seed decoupled.
namespace stream {
inline constexpr std::uint64_t kBootstrap = 0x626f6f7473747261ULL;
inline constexpr std::uint64_t kTree = 0x747265656e6f6465ULL;
inline constexpr std::uint64_t kSample = 0x73616d706c657230ULL;
inline constexpr std::uint64_t kSplit = 0x73706c6974737472ULL;
inline constexpr std::uint64_t kFolds = 0x666f6c6473686466ULL;
inline constexpr std::uint64_t kSearch = 0x7365617263686974ULL;
inline constexpr std::uint64_t kSynth = 0x73796e7468657469ULL;
inline constexpr std::uint64_t kPermute = 0x7065726d75746530ULL;
inline constexpr std::uint64_t kRep = 0x7265706561743030ULL;
}  // namespace stream

// Deterministic generator. The engine (mt19937_64) is fully specified by the
// standard; the std::* distributions are not, so all sampling helpers are
// implemented here by hand. Identical seeds give identical streams on every
// platform and under every thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Canonical double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Inclusive integer range.
  long long uniform_int(long long lo, long long hi) {
    return lo + static_cast<long long>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 =
        (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates; last-to-first so one call to below() per position.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace insider
