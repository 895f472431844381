#pragma once

#include "jcep/types.hpp"

#include <cstdint>
#include <random>

namespace jcep {

/// One step of the splitmix64 generator; used as a mixing function for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-mode child seed: a pure function of (parent, index) so trial seeds do not
/// depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  /// Circularly-symmetric complex Gaussian with E|x|^2 = var.
  cplx cgauss(double var);
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace jcep
