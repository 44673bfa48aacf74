#pragma once

#include <cstdint>
#include <limits>

namespace gdcn {

/// splitmix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return mix64(seed ^ mix64(salt + 0x632be59bd9b4e019ULL));
}

/// Counter-based random stream. The n-th draw of a stream depends only on
/// (key, n), so streams keyed by e.g. (seed, chain, sample) can be evaluated
/// in any order and still produce identical numbers.
///
/// Satisfies UniformRandomBitGenerator so it can drive std::shuffle.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept : key_(mix64(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) noexcept : key_(combine_seed(seed, stream)) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) noexcept
      : key_(combine_seed(combine_seed(seed, stream), substream)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + 0xd1b54a32d192ed03ULL * ++counter_); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; every call consumes exactly two draws.
  double normal() noexcept;

  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gdcn
