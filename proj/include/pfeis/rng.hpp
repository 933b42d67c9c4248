#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace pfeis {

// Small counter-keyed generator. Every (seed, domain, run, t, particle) key
// maps to an independent stream, so results never depend on which thread
// evaluates which particle.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) : state_(key) {}

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();

 private:
  std::uint64_t state_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t x);

// Stream domains, kept distinct so simulation and filtering never share draws.
enum StreamDomain : std::uint64_t {
  kDomainSimulate = 1,
  kDomainFilter = 2,
  kDomainResample = 3,
  kDomainMonteCarlo = 4,
};

}  // namespace pfeis
