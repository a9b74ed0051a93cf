#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <ATen/core/Generator.h>

namespace changen {

/// splitmix64 finalizer; the mixing step behind every derived seed.
std::uint64_t mix64(std::uint64_t x);

/// Combines a base seed with stream identifiers (sample id, step, worker ...).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// FNV-1a over the bytes of a string; stable across platforms.
std::uint64_t fnv1a(std::string_view text);

/// Explicit random stream. Every stochastic choice in the library takes one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  double normal();

  /// Independent child stream seeded from this one.
  Rng split() { return Rng(mix64(next())); }

  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// CPU torch generator seeded deterministically (noise maps, weight init).
at::Generator torch_generator(std::uint64_t seed);

}  // namespace changen
