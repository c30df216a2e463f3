#pragma once

#include <array>
#include <cstdint>

namespace rbsd {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Stream purposes. Every simulated object draws from its own stream so that
/// results do not depend on scheduling or on how paths are partitioned.
enum class Stream : std::uint32_t {
  kMarks = 1,
  kBrownian = 2,
  kParticles = 3,
  kInit = 4,
  kAux = 5,
  kBridge = 6,  // Brownian bridge splits of knot increments at jump times
};

/// Derive a 64-bit stream id from (path index, purpose).
constexpr std::uint64_t stream_id(std::uint64_t path, Stream purpose) {
  return (path << 4) | static_cast<std::uint64_t>(purpose);
}

/// Counter-based generator: the seed is the Philox key, the stream id and a
/// 64-bit block position form the counter. Cheap to construct; copyable.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal via the inverse CDF of uniform().
  double normal();
  /// Exponential with the given rate.
  double exponential(double rate);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t blocks_used() const { return position_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9 on (0, 1)).
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace rbsd
