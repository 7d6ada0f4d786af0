#pragma once

// Seeding utilities.
//
// Every random decision is drawn from a substream identified by a key path
// (master seed, purpose, indices...). Two scenarios that share a seed see the
// same draw for the same decision, which gives common random numbers across
// paired comparisons and makes each draw replayable from the trace.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace divsim {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum class Purpose : std::uint64_t {
  Network = 1,
  Code,
  OsMix,
  BrowserMix,
  Diversity,
  Vulnerability,
  ExploitClass,
  ExploitSelect,
  InitialSelect,
  InitialGate,
  LateralGate,
  Run,
};

class StreamKey {
 public:
  constexpr StreamKey() noexcept = default;
  constexpr explicit StreamKey(std::uint64_t seed) noexcept : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  template <typename... Parts>
  constexpr StreamKey derive(Parts... parts) const noexcept {
    StreamKey k = *this;
    (k.absorb(static_cast<std::uint64_t>(parts)), ...);
    return k;
  }

  constexpr std::uint64_t bits() const noexcept { return splitmix64(state_ ^ 0xbb67ae8584caa73bULL); }

  // Uniform double in [0, 1) with 53 bits of resolution.
  constexpr double uniform() const noexcept { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine() const { return std::mt19937_64(bits()); }

  constexpr std::uint64_t raw() const noexcept { return state_; }

 private:
  constexpr void absorb(std::uint64_t part) noexcept {
    state_ = splitmix64(state_ ^ splitmix64(part + 0x3c6ef372fe94f82bULL));
  }

  std::uint64_t state_ = 0;
};

// Engine helpers with fixed, platform-independent output (std distributions
// are implementation-defined).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  // Lemire's nearly divisionless method.
  __uint128_t m = static_cast<__uint128_t>(rng()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<__uint128_t>(rng()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// Number of failures before the next success of a Bernoulli(p) sequence.
// Used to enumerate sparse random arc sets without one draw per pair.
inline std::uint64_t geometric_skip(std::mt19937_64& rng, double p) {
  if (p >= 1.0) return 0;
  if (p <= 0.0) return std::numeric_limits<std::uint64_t>::max();
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  const double skip = std::floor(std::log(u) / std::log1p(-p));
  if (skip >= 9.0e18) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(skip);
}

}  // namespace divsim
