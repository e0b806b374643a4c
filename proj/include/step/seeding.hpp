#pragma once

#include <cstdint>

namespace step {

/// splitmix64 finalizer; decorrelates derived seeds.
inline std::uint64_t split_mix(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

/// Derived stream seed for (parent seed, index); used for per-video and
/// per-clip rng streams so parallel runs stay deterministic.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return split_mix(seed ^ split_mix(index + 0x51ed270b3f6cde11ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

}  // namespace step
