#include "pairedepi/rng.hpp"

#include <cmath>
#include <numbers>

#include "pairedepi/errors.hpp"

namespace pairedepi {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw InvalidInputError("gamma draw requires positive shape and rate");
  }
  if (shape < 1.0) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v / rate;
    }
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw InvalidInputError("uniform_int requires lo <= hi");
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return lo + static_cast<int>(r % span);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidInputError("categorical weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return k;
  }
  return weights.size() - 1;
}

std::vector<int> Rng::multinomial(int n, std::span<const double> weights) {
  std::vector<int> counts(weights.size(), 0);
  for (int k = 0; k < n; ++k) counts[categorical(weights)] += 1;
  return counts;
}

std::vector<double> Rng::dirichlet(std::span<const double> concentration) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[k] = gamma(concentration[k], 1.0);
    total += out[k];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace pairedepi
