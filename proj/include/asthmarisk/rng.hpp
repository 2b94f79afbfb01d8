#pragma once

#include <cstdint>
#include <random>

namespace asthmarisk {

// splitmix64; used to derive independent child seeds from (seed, stream index)
// so per-patient generation stays pure and order-independent.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 child_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64{mix64(mix64(seed) ^ stream)};
}

// Stream-tag namespaces per consumer, so modules sharing one master seed
// never draw from identical child streams. synth owns the low range (two
// streams per patient index).
namespace rng_stream {
inline constexpr std::uint64_t kSplit = 0x53504C4900000000ULL;
inline constexpr std::uint64_t kLasso = 0x4C41535300000000ULL;
inline constexpr std::uint64_t kMlp = 0x4D4C500000000000ULL;
}  // namespace rng_stream

}  // namespace asthmarisk
