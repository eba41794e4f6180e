#pragma once

#include <cmath>
#include <cstdint>

namespace chfkit {

/// Deterministic counter-based generator (splitmix64 over seed + counter).
/// An identical seed always yields an identical stream, on every platform,
/// regardless of what other streams are drawn from concurrently. All
/// randomness in the library flows through this class so that a run is
/// reproducible from its seeds alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Uses the cosine branch only, so each
  /// draw consumes exactly two words of the stream.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  /// Uniform integer in [0, n). Fixed-point multiply; the bias of ~n/2^64 is
  /// irrelevant at the dataset sizes involved and keeps the draw count fixed.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

/// Derives a per-stage or per-task seed from a global seed and a stream tag.
/// Used to give every pipeline stage (shuffle, init, latent draws, ...) its
/// own independent stream while keeping the whole run a function of one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace chfkit
