#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pdmp {

/// Counter-based seeding: every consumer derives its own stream from
/// (root seed, purpose label, index), so fan-out order never changes results.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index);

/// Small deterministic generator (splitmix-seeded xoshiro256++). Distributions
/// are hand-rolled so outputs are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0,1).
  double uniform();
  /// Uniform on (0,1] (safe for logs).
  double uniform_pos();
  double exponential(double rate);
  double normal();
  /// Index in [0,n) with probability weights[i]/sum.
  int pick_discrete(const std::vector<double>& weights);

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pdmp
