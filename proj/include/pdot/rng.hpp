#pragma once

#include <cstdint>
#include <random>

namespace pdot {

// Quantile of the standard normal (Wichura's PPND16 rational approximation,
// accurate to ~1e-15 over (0,1)). Throws std::domain_error outside (0,1).
double normal_quantile(double u);

// Standard normal CDF.
double normal_cdf(double x);

// Derives an independent seed from a base seed and a purpose tag (splitmix64
// finalizer), so one user-facing seed can feed several disjoint streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// Deterministic random source. Built on mt19937_64, whose output sequence is
// fixed by the C++ standard, with all variate transforms implemented via
// inverse CDF so that sampled streams are identical across platforms and
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0,1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_quantile(uniform()); }

  // Uniform index in [0, n).
  std::int64_t index(std::int64_t n) {
    auto k = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pdot
