#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace hazdid {

// SplitMix64 finalizer. Used to derive independent per-stream seeds from a
// (master seed, stream, index) counter triple.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(mix64(master) ^ stream) ^ (index * 0xd1b54a32d192ed03ULL));
}

// Stream names keep the seed derivations of different consumers apart.
namespace streams {
inline constexpr std::uint64_t kBootstrap = 0x626f6f74ULL;
inline constexpr std::uint64_t kSimulate = 0x73696d75ULL;
inline constexpr std::uint64_t kReplicate = 0x7265706cULL;
}  // namespace streams

// mt19937_64 has a fully specified output sequence; the bounded-integer and
// unit-interval maps below are written out so draws are identical on every
// platform (std::uniform_*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., bound-1}; Lemire's nearly-divisionless method.
  std::size_t below(std::size_t bound) {
    const std::uint64_t range = bound;
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
      const std::uint64_t threshold = (0 - range) % range;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * range;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::size_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hazdid
