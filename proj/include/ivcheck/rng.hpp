#pragma once

#include <cstdint>
#include <random>

namespace ivcheck {

/// Identifies one deterministic draw sequence.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Child stream keyed by `index`; children of distinct indices are
  /// independent and do not depend on how work is split across threads.
  RngSpec child(std::uint64_t index) const;

  bool operator==(const RngSpec&) const = default;
};

class Rng {
 public:
  explicit Rng(const RngSpec& spec);

  double uniform() { return uniform_(engine_); }              // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer, used to derive well-mixed child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Non-deterministic seed for runs that did not pass one explicitly.
std::uint64_t entropy_seed();

}  // namespace ivcheck
