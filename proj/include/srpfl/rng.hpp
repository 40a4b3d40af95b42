#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace srpfl::rng {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Purpose tags keep the substreams of one master seed disjoint.
enum class Stream : std::uint64_t {
  GroundTruth = 0x6774,
  Batch = 0x6261,
  Speed = 0x7370,
  SpeedRates = 0x7372,
  ClientSample = 0x6373,
  Calibration = 0x636c,
  Oracle = 0x6f72,
};

/// Derive a stream key from a master seed, a purpose tag and any number of
/// coordinates (client, round, stage, ...). Pure function of its inputs.
inline std::uint64_t stream_key(std::uint64_t seed, Stream tag,
                                std::initializer_list<std::uint64_t> coords = {}) noexcept {
  std::uint64_t h = mix64(seed ^ 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  for (std::uint64_t c : coords) h = mix64(h + 0x9E3779B97F4A7C15ULL + c);
  return h;
}

/// Counter-based generator: output i is mix64(key + i * gamma). The whole
/// stream is determined by the key, so per-(client, round) draws do not
/// depend on execution order. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, Stream tag, std::initializer_list<std::uint64_t> coords = {}) noexcept
      : key_(stream_key(seed, tag, coords)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace srpfl::rng
