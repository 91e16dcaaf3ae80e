#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cowmask {

/// Serializable position of an Rng: the stream seed plus the number of
/// 64-bit words consumed so far.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Counter-based SplitMix64 generator.
///
/// Word k of stream `seed` is `mix64(seed + k * 0x9E3779B97F4A7C15)`, so any
/// position can be reached in O(1) and a batch of fixed-cost draws can be
/// fanned out across workers while reproducing the sequential stream exactly.
/// Every derived variate below consumes a fixed number of words except
/// gamma()/beta(), which use rejection sampling.
///
/// Standard normals come from the inverse normal CDF (one word per variate)
/// so the stream layout never depends on rejection outcomes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0) noexcept
      : seed_(seed), position_(position) {}
  explicit Rng(RngState state) noexcept : Rng(state.seed, state.position) {}

  RngState state() const noexcept { return {seed_, position_}; }

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Multiply-shift, one word per call.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  void fill_normal(std::span<double> out) noexcept;

  double gamma(double shape);
  double beta(double a, double b);

  /// Skip `words` draws.
  void advance(std::uint64_t words) noexcept { position_ += words; }

  /// Independent child stream keyed by `stream_id`; does not advance *this.
  Rng fork(std::uint64_t stream_id) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace cowmask
