#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace spdelab {

/// Philox 4x64 counter-based random generator, 10 rounds.
///
/// Every 256-bit counter maps to an independent 256-bit block under a
/// 128-bit key, so random values can be regenerated in any order (and from
/// any thread) bit-identically from (key, counter) alone.
namespace philox {

inline constexpr uint64_t kMult0 = 0xD2E7470EE14C6C93ULL;
inline constexpr uint64_t kMult1 = 0xCA5A826395121157ULL;
inline constexpr uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
inline constexpr uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(uint64_t a, uint64_t b, uint64_t& hi, uint64_t& lo) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<uint64_t>(p >> 64);
  lo = static_cast<uint64_t>(p);
}

inline std::array<uint64_t, 4> block(std::array<uint64_t, 4> x, std::array<uint64_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMult0, x[0], hi0, lo0);
    mulhilo(kMult1, x[2], hi1, lo1);
    x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return x;
}

}  // namespace philox

/// Uniform double in (0, 1]; uses the top 53 bits.
inline double to_unit_closed(uint64_t u) {
  return static_cast<double>((u >> 11) + 1) * 0x1.0p-53;
}

/// Uniform double in [0, 1).
inline double to_unit_open(uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

/// Streams of counter-keyed randomness are separated by a fixed tag so that
/// different consumers (noise cells, parameter sweeps, ...) never collide.
enum class RngStream : uint64_t {
  kNoiseCell = 0,
  kSweep = 1,
  kWitness = 2,
};

/// Standard normal draw addressed by (seed, replicate, k, j, stream).
///
/// Evaluation order never matters: the value is a pure function of the key.
inline double counter_gaussian(uint64_t seed, uint64_t replicate, uint64_t k, uint64_t j,
                               RngStream stream = RngStream::kNoiseCell) {
  auto out = philox::block({k, j, static_cast<uint64_t>(stream), 0},
                           {seed, replicate});
  double u1 = to_unit_closed(out[0]);
  double u2 = to_unit_open(out[1]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Uniform [0,1) draw addressed the same way as counter_gaussian.
inline double counter_uniform(uint64_t seed, uint64_t replicate, uint64_t k, uint64_t j,
                              RngStream stream = RngStream::kSweep) {
  auto out = philox::block({k, j, static_cast<uint64_t>(stream), 0},
                           {seed, replicate});
  return to_unit_open(out[0]);
}

}  // namespace spdelab
