#pragma once

#include <cstdint>

namespace ppl {

/// Counter-based generator: output k is a SplitMix64 finalizer applied to
/// key + k * golden-ratio increment. Identical seeds give identical integer
/// streams on every platform. Gaussians come from Box-Muller on that stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();

  /// Independent child stream; advances this stream by one draw.
  Rng split();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t z);

/// Thread-local generator used when modules and layers are constructed.
Rng& init_rng();
void manual_seed(std::uint64_t seed);

}  // namespace ppl
