#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ntkpinn {

/// Name recorded in experiment artifacts so runs can be replayed.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64/splitmix64-streams";

/// One step of SplitMix64; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of master seed `seed`. Streams are split
/// hierarchically, e.g. stream_seed(stream_seed(seed, kSketch), step).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Well-known stream ids used across the library.
namespace streams {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kCollocation = 2;
inline constexpr std::uint64_t kSketch = 3;
inline constexpr std::uint64_t kData = 4;
inline constexpr std::uint64_t kReplicates = 5;
inline constexpr std::uint64_t kAltTrace = 6;
inline constexpr std::uint64_t kEvaluation = 7;
}  // namespace streams

/// Deterministic engine for (seed, stream).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ntkpinn
