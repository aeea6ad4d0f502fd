#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

#include "lewisgame/error.hpp"

namespace lewisgame {

// Well-known stream ids. A (seed, stream) pair fully determines a draw
// sequence, so consumers that advance independently (validation vs. batch
// sampling) cannot perturb each other.
enum class Stream : std::uint64_t {
  kInit = 1,      // parameter initialization
  kSampling = 2,  // training-time game and action sampling
  kNoise = 3,     // noise-pair probes
  kEval = 4,      // validation / test evaluation
  kSplit = 5,     // dataset split construction
  kData = 6,      // synthetic feature generation
  kProbe = 7,     // RSA probe row selection
};

namespace detail {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

// Counter-based generator: draw i of stream (seed, id) is
// mix64(key(seed, id) + i * golden). No hidden global state, and the
// sequence is identical across platforms for a given (seed, id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_(detail::mix64(detail::mix64(seed + detail::kGolden) + stream_id)) {}

  RngStream(std::uint64_t seed, Stream stream)
      : RngStream(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t next_u64() {
    counter_ += 1;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double next_normal() {
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Uniform index in [0, n); rejection sampling avoids modulo bias.
  std::size_t next_index(std::size_t n) {
    if (n == 0) fail(ErrorKind::Parameter, "next_index: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % span);
  }

  bool next_coin() { return (next_u64() & 1u) != 0; }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lewisgame
