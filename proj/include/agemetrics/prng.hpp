#pragma once

#include <cstdint>

namespace agemetrics {

// Counter-based SplitMix64 streams. Every draw is a pure function of
// (key, counter), so substreams never interact, replications can be seeded
// independently, and output is stable across platforms and releases.

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

/// Derives the key of substream `stream` of a base seed.
constexpr std::uint64_t substream_key(std::uint64_t seed, std::uint64_t stream) noexcept {
  return detail::mix64(detail::mix64(seed + detail::kGamma) + (stream + 1) * detail::kGamma);
}

/// One Bernoulli event source; draw(n) is independent of every other counter.
class BernoulliStream {
 public:
  BernoulliStream(std::uint64_t seed, std::uint64_t stream, double p) noexcept
      : key_(substream_key(seed, stream)), p_(p) {}

  bool draw(std::uint64_t counter) const noexcept {
    const std::uint64_t v = detail::mix64(key_ + (counter + 1) * detail::kGamma);
    // 53-bit mantissa uniform in [0,1)
    const double u = static_cast<double>(v >> 11) * 0x1.0p-53;
    return u < p_;
  }

 private:
  std::uint64_t key_;
  double p_;
};

}  // namespace agemetrics
