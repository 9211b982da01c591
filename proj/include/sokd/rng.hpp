#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sokd {

// Deterministic 64-bit generator (splitmix64 core). All randomness in the
// project flows through this so runs reproduce bit-exactly regardless of
// platform libstdc++ distribution details.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Sample an index from a discrete distribution given by nonneg weights.
  std::size_t categorical(const std::vector<double>& weights);

  // Fisher-Yates shuffle of indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_;
};

// Derives a named sub-stream seed from a master seed (FNV-1a over the name,
// mixed with the seed). Changing one stage's draws cannot reshuffle another.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name);

}  // namespace sokd
