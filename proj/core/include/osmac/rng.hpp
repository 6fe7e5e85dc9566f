#pragma once

#include <cstdint>
#include <random>

namespace osmac {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent seed for a named purpose and an index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(seed ^ mix64(stream)) + mix64(index ^ 0xD1B54A32D192ED03ULL));
}

/// Uniform on (0, 1], from the top 53 bits. Never returns 0.
constexpr double to_unit_open0(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

/// Counter-based uniform keyed by (seed, counter): the draw for row i does not
/// depend on which other rows were drawn or in which order.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter) noexcept {
  return to_unit_open0(mix64(mix64(seed) ^ mix64(counter + 0x632BE59BD9B4E019ULL)));
}

/// Sequential generator with a portable bit stream (mt19937_64 is fully
/// specified by the standard; the distribution objects are not, so none are
/// used here).
class SeqRng {
 public:
  explicit SeqRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() noexcept { return to_unit_open0(engine_()); }
  std::uint64_t bits() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Stream tags for derive_seed.
namespace streams {
inline constexpr std::uint64_t pilot = 1;
inline constexpr std::uint64_t stage = 2;
inline constexpr std::uint64_t data = 3;
inline constexpr std::uint64_t replicate = 4;
inline constexpr std::uint64_t monte_carlo = 5;
}  // namespace streams

}  // namespace osmac
