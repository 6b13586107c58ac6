#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace morphctl {

// Seeded generator with distributions implemented here rather than taken from
// <random>, whose distribution algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Derives an independent seed from this one and a stream tag.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

  // Full generator state as text, for resumable runs.
  std::string save() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace morphctl
