#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pairedepi/errors.hpp"

namespace pairedepi {

enum class TestResult : std::uint8_t { kNegative = 0, kPositive = 1, kMissing = 2 };

/// One individual's observed test results; missing entries are marginalized
/// out by the observation model (single-stream datasets).
struct ObservedOutcome {
  std::vector<TestResult> results;

  bool complete() const;
  int num_tests() const { return static_cast<int>(results.size()); }
  static ObservedOutcome complete_from_bits(int num_tests, unsigned bits);
  static ObservedOutcome all_missing(int num_tests);
};

/// Per-test sensitivity phi_j = P(T*=1 | T=1) and specificity
/// psi_j = P(T*=0 | T=0).
struct TestPerformance {
  std::vector<double> sensitivity;
  std::vector<double> specificity;

  void validate(int num_tests) const;
  static TestPerformance perfect(int num_tests);
};

/// Value of test j (0-based, leftmost in bitstrings) inside an outcome index.
unsigned outcome_bit(unsigned bits, int num_tests, int test);
std::string outcome_bitstring(unsigned bits, int num_tests);
unsigned outcome_from_bitstring(std::string_view text);

/// Total map from the 2^J test-outcome vectors onto model compartments, with
/// a weight distribution over each compartment's preimage. Weights matter
/// only for compartments assigned more than one outcome (the SIR ambiguity).
class CharacterizationMap {
 public:
  CharacterizationMap(std::vector<std::string> test_names,
                      std::vector<std::string> compartment_names,
                      std::vector<int> assignment,
                      std::optional<std::vector<double>> weights = std::nullopt);

  int num_tests() const { return static_cast<int>(test_names_.size()); }
  int num_compartments() const { return static_cast<int>(compartment_names_.size()); }
  int num_outcomes() const { return 1 << num_tests(); }

  int compartment_of(unsigned outcome_bits) const;
  const std::vector<unsigned>& preimage(int compartment) const;
  double weight(unsigned outcome_bits) const;

  const std::vector<std::string>& test_names() const { return test_names_; }
  const std::vector<std::string>& compartment_names() const { return compartment_names_; }
  int test_index(std::string_view name) const;

  /// True when every outcome in every preimage agrees on test j, i.e. the
  /// compartment alone determines the true status of test j. Single-stream
  /// SIR fits can only be scored on their determined test.
  bool test_determined(int test) const;

  std::string to_json() const;
  static CharacterizationMap from_json(const std::string& text);

 private:
  std::vector<std::string> test_names_;
  std::vector<std::string> compartment_names_;
  std::vector<int> assignment_;             // outcome index -> compartment
  std::vector<double> weights_;             // w(t | chi(t)), sums to 1 per preimage
  std::vector<std::vector<unsigned>> preimages_;
};

/// Paired pathogen + antibody tests onto S/I/B/R: (0,0)->s, (1,0)->i,
/// (1,1)->b, (0,1)->r. All preimages are singletons.
CharacterizationMap sibr_map();

enum class SirAmbiguity { kInfectious, kRecovered };

/// Paired tests onto S/I/R; the double-positive outcome must be assigned a
/// priori to i (SIR-I) or r (SIR-R). weight_on_both_positive is the within-
/// compartment weight of the (1,1) outcome (default uniform over the pair).
CharacterizationMap sir_map(SirAmbiguity both_positive,
                            double weight_on_both_positive = 0.5);

/// P(T* = obs | Y = compartment): preimage-weighted product of per-test
/// error kernels; missing entries contribute a factor of one.
double conditional_obs_prob(const CharacterizationMap& map, const TestPerformance& perf,
                            int compartment, const ObservedOutcome& obs);

/// P(T* = obs | pi): conditional probabilities mixed over the compartment
/// distribution pi.
double marginal_obs_prob(const CharacterizationMap& map, const TestPerformance& perf,
                         std::span<const double> pi, const ObservedOutcome& obs);

/// Marginal probability that test j reads positive under pi.
double marginal_positive_prob(const CharacterizationMap& map, const TestPerformance& perf,
                              std::span<const double> pi, int test);

}  // namespace pairedepi
