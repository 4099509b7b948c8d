#pragma once

#include <cstdint>
#include <random>

namespace csgmcmc {

/// splitmix64 finalizer; the per-chain seed derivation is built on it and
/// must stay stable across versions.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Sampler-owned random stream. Counts Gaussian draws so callers can check
/// that noise-free stages never consume noise.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() {
    ++normal_draws_;
    return normal_(engine_);
  }

  double uniform() { return uniform_(engine_); }

  engine_type& engine() { return engine_; }

  std::uint64_t normal_draws() const { return normal_draws_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::uint64_t normal_draws_ = 0;
};

}  // namespace csgmcmc
