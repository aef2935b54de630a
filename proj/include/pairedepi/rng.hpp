#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace pairedepi {

/// splitmix64 step; mixes a stream id into a master seed so that independent
/// components (chains, replicates) get decorrelated, order-free streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source. All distributions are implemented on top of
/// the raw mt19937_64 stream so that draw sequences are reproducible for a
/// fixed seed regardless of standard-library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// U[0, 1)
  double uniform();
  /// standard normal (Box-Muller, two uniforms per draw)
  double normal();
  /// Gamma(shape, rate), Marsaglia-Tsang squeeze
  double gamma(double shape, double rate);
  double beta(double a, double b);
  /// uniform integer on [lo, hi], both inclusive
  int uniform_int(int lo, int hi);
  /// index draw proportional to weights (need not be normalized)
  std::size_t categorical(std::span<const double> weights);
  std::vector<int> multinomial(int n, std::span<const double> weights);
  std::vector<double> dirichlet(std::span<const double> concentration);

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pairedepi
