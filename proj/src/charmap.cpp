#include "pairedepi/charmap.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "pairedepi/csvio.hpp"

namespace pairedepi {

namespace {
constexpr double kWeightTol = 1e-12;
}

bool ObservedOutcome::complete() const {
  return std::none_of(results.begin(), results.end(),
                      [](TestResult r) { return r == TestResult::kMissing; });
}

ObservedOutcome ObservedOutcome::complete_from_bits(int num_tests, unsigned bits) {
  ObservedOutcome obs;
  obs.results.resize(static_cast<std::size_t>(num_tests));
  for (int j = 0; j < num_tests; ++j) {
    obs.results[static_cast<std::size_t>(j)] =
        outcome_bit(bits, num_tests, j) ? TestResult::kPositive : TestResult::kNegative;
  }
  return obs;
}

ObservedOutcome ObservedOutcome::all_missing(int num_tests) {
  ObservedOutcome obs;
  obs.results.assign(static_cast<std::size_t>(num_tests), TestResult::kMissing);
  return obs;
}

void TestPerformance::validate(int num_tests) const {
  if (static_cast<int>(sensitivity.size()) != num_tests ||
      static_cast<int>(specificity.size()) != num_tests) {
    throw InvalidInputError("test performance entries do not match the number of tests");
  }
  for (double v : sensitivity) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInputError("sensitivity outside [0,1]");
    }
  }
  for (double v : specificity) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInputError("specificity outside [0,1]");
    }
  }
}

TestPerformance TestPerformance::perfect(int num_tests) {
  TestPerformance perf;
  perf.sensitivity.assign(static_cast<std::size_t>(num_tests), 1.0);
  perf.specificity.assign(static_cast<std::size_t>(num_tests), 1.0);
  return perf;
}

unsigned outcome_bit(unsigned bits, int num_tests, int test) {
  return (bits >> (num_tests - 1 - test)) & 1u;
}

std::string outcome_bitstring(unsigned bits, int num_tests) {
  std::string out(static_cast<std::size_t>(num_tests), '0');
  for (int j = 0; j < num_tests; ++j) {
    if (outcome_bit(bits, num_tests, j)) out[static_cast<std::size_t>(j)] = '1';
  }
  return out;
}

unsigned outcome_from_bitstring(std::string_view text) {
  unsigned bits = 0;
  for (char c : text) {
    if (c != '0' && c != '1') {
      throw InvalidInputError("outcome bitstring must contain only 0 and 1: '" +
                              std::string(text) + "'");
    }
    bits = (bits << 1) | static_cast<unsigned>(c == '1');
  }
  return bits;
}

CharacterizationMap::CharacterizationMap(std::vector<std::string> test_names,
                                         std::vector<std::string> compartment_names,
                                         std::vector<int> assignment,
                                         std::optional<std::vector<double>> weights)
    : test_names_(std::move(test_names)),
      compartment_names_(std::move(compartment_names)),
      assignment_(std::move(assignment)) {
  const int J = num_tests();
  const int C = num_compartments();
  if (J < 1 || J > 16) throw InvalidInputError("characterization map needs 1..16 tests");
  if (C < 1) throw InvalidInputError("characterization map needs at least one compartment");
  if (static_cast<int>(assignment_.size()) != num_outcomes()) {
    throw InvalidInputError("assignment must cover all " + std::to_string(num_outcomes()) +
                            " outcome vectors");
  }
  preimages_.assign(static_cast<std::size_t>(C), {});
  for (unsigned t = 0; t < static_cast<unsigned>(num_outcomes()); ++t) {
    const int y = assignment_[t];
    if (y < 0 || y >= C) {
      throw InvalidInputError("assignment maps outcome " + outcome_bitstring(t, J) +
                              " to an unknown compartment");
    }
    preimages_[static_cast<std::size_t>(y)].push_back(t);
  }
  for (int y = 0; y < C; ++y) {
    if (preimages_[static_cast<std::size_t>(y)].empty()) {
      throw InvalidInputError("compartment '" + compartment_names_[static_cast<std::size_t>(y)] +
                              "' has no assigned outcome (map must be surjective)");
    }
  }

  if (weights.has_value()) {
    weights_ = std::move(*weights);
    if (weights_.size() != assignment_.size()) {
      throw InvalidInputError("weights must cover all outcome vectors");
    }
    for (int y = 0; y < C; ++y) {
      double total = 0.0;
      for (unsigned t : preimages_[static_cast<std::size_t>(y)]) {
        const double w = weights_[t];
        if (!std::isfinite(w) || w < 0.0) {
          throw InvalidInputError("preimage weights must be nonnegative");
        }
        total += w;
      }
      if (std::abs(total - 1.0) > kWeightTol) {
        throw InvalidInputError("weights over the preimage of '" +
                                compartment_names_[static_cast<std::size_t>(y)] +
                                "' sum to " + fmt_double(total) + ", expected 1");
      }
    }
  } else {
    weights_.resize(assignment_.size());
    for (int y = 0; y < C; ++y) {
      const auto& pre = preimages_[static_cast<std::size_t>(y)];
      for (unsigned t : pre) weights_[t] = 1.0 / static_cast<double>(pre.size());
    }
  }
}

int CharacterizationMap::compartment_of(unsigned outcome_bits) const {
  if (outcome_bits >= static_cast<unsigned>(num_outcomes())) {
    throw InvalidInputError("outcome index out of range");
  }
  return assignment_[outcome_bits];
}

const std::vector<unsigned>& CharacterizationMap::preimage(int compartment) const {
  if (compartment < 0 || compartment >= num_compartments()) {
    throw InvalidInputError("compartment index out of range");
  }
  return preimages_[static_cast<std::size_t>(compartment)];
}

double CharacterizationMap::weight(unsigned outcome_bits) const {
  if (outcome_bits >= static_cast<unsigned>(num_outcomes())) {
    throw InvalidInputError("outcome index out of range");
  }
  return weights_[outcome_bits];
}

int CharacterizationMap::test_index(std::string_view name) const {
  for (int j = 0; j < num_tests(); ++j) {
    if (test_names_[static_cast<std::size_t>(j)] == name) return j;
  }
  throw InvalidInputError("unknown test name: '" + std::string(name) + "'");
}

bool CharacterizationMap::test_determined(int test) const {
  if (test < 0 || test >= num_tests()) throw InvalidInputError("test index out of range");
  for (const auto& pre : preimages_) {
    const unsigned first = outcome_bit(pre.front(), num_tests(), test);
    for (unsigned t : pre) {
      if (outcome_bit(t, num_tests(), test) != first) return false;
    }
  }
  return true;
}

std::string CharacterizationMap::to_json() const {
  nlohmann::json j;
  j["tests"] = test_names_;
  j["compartments"] = compartment_names_;
  nlohmann::json assign = nlohmann::json::object();
  bool any_shared = false;
  for (unsigned t = 0; t < static_cast<unsigned>(num_outcomes()); ++t) {
    assign[outcome_bitstring(t, num_tests())] =
        compartment_names_[static_cast<std::size_t>(assignment_[t])];
  }
  j["assignment"] = assign;
  for (const auto& pre : preimages_) any_shared = any_shared || pre.size() > 1;
  if (any_shared) {
    nlohmann::json weights = nlohmann::json::object();
    for (int y = 0; y < num_compartments(); ++y) {
      const auto& pre = preimages_[static_cast<std::size_t>(y)];
      if (pre.size() <= 1) continue;
      nlohmann::json per = nlohmann::json::object();
      for (unsigned t : pre) per[outcome_bitstring(t, num_tests())] = weights_[t];
      weights[compartment_names_[static_cast<std::size_t>(y)]] = per;
    }
    j["weights"] = weights;
  }
  return j.dump(2) + "\n";
}

CharacterizationMap CharacterizationMap::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("characterization map is not valid JSON: ") + e.what());
  }
  if (!j.contains("tests") || !j.contains("compartments") || !j.contains("assignment")) {
    throw InvalidInputError("characterization map JSON needs tests, compartments, assignment");
  }
  std::vector<std::string> tests = j["tests"].get<std::vector<std::string>>();
  std::vector<std::string> comps = j["compartments"].get<std::vector<std::string>>();
  const int J = static_cast<int>(tests.size());
  const int n_out = 1 << J;

  auto comp_index = [&](const std::string& name) {
    const auto it = std::find(comps.begin(), comps.end(), name);
    if (it == comps.end()) {
      throw InvalidInputError("assignment references unknown compartment '" + name + "'");
    }
    return static_cast<int>(it - comps.begin());
  };

  std::vector<int> assignment(static_cast<std::size_t>(n_out), -1);
  for (const auto& [key, value] : j["assignment"].items()) {
    if (static_cast<int>(key.size()) != J) {
      throw InvalidInputError("assignment key '" + key + "' must have one bit per test");
    }
    assignment[outcome_from_bitstring(key)] = comp_index(value.get<std::string>());
  }
  for (int t = 0; t < n_out; ++t) {
    if (assignment[static_cast<std::size_t>(t)] < 0) {
      throw InvalidInputError("assignment missing outcome " +
                              outcome_bitstring(static_cast<unsigned>(t), J));
    }
  }

  std::optional<std::vector<double>> weights;
  if (j.contains("weights")) {
    std::vector<double> w(static_cast<std::size_t>(n_out), 0.0);
    // singleton preimages default to weight one
    for (int t = 0; t < n_out; ++t) w[static_cast<std::size_t>(t)] = 1.0;
    for (const auto& [comp_name, per] : j["weights"].items()) {
      comp_index(comp_name);  // validates the name
      for (const auto& [key, value] : per.items()) {
        w[outcome_from_bitstring(key)] = value.get<double>();
      }
    }
    weights = std::move(w);
  }
  return CharacterizationMap(std::move(tests), std::move(comps), std::move(assignment),
                             std::move(weights));
}

CharacterizationMap sibr_map() {
  // outcome order 00, 01, 10, 11 -> s, r, i, b
  return CharacterizationMap({"pcr", "serology"}, {"s", "i", "b", "r"}, {0, 3, 1, 2});
}

CharacterizationMap sir_map(SirAmbiguity both_positive, double weight_on_both_positive) {
  if (!(weight_on_both_positive >= 0.0) || !(weight_on_both_positive <= 1.0)) {
    throw InvalidInputError("weight on the (1,1) outcome must lie in [0,1]");
  }
  const int shared = both_positive == SirAmbiguity::kInfectious ? 1 : 2;
  std::vector<int> assignment = {0, 2, 1, shared};
  std::vector<double> weights = {1.0, 1.0, 1.0, weight_on_both_positive};
  // the other outcome in the shared preimage carries the remaining mass
  weights[static_cast<std::size_t>(both_positive == SirAmbiguity::kInfectious ? 2 : 1)] =
      1.0 - weight_on_both_positive;
  return CharacterizationMap({"pcr", "serology"}, {"s", "i", "r"}, std::move(assignment),
                             std::move(weights));
}

double conditional_obs_prob(const CharacterizationMap& map, const TestPerformance& perf,
                            int compartment, const ObservedOutcome& obs) {
  const int J = map.num_tests();
  perf.validate(J);
  if (obs.num_tests() != J) {
    throw InvalidInputError("observed outcome length does not match the map");
  }
  if (compartment < 0 || compartment >= map.num_compartments()) {
    throw InvalidInputError("compartment index out of range");
  }
  double total = 0.0;
  for (unsigned t : map.preimage(compartment)) {
    double p = map.weight(t);
    for (int j = 0; j < J && p > 0.0; ++j) {
      const TestResult r = obs.results[static_cast<std::size_t>(j)];
      if (r == TestResult::kMissing) continue;
      const auto idx = static_cast<std::size_t>(j);
      const double p_positive = outcome_bit(t, J, j) ? perf.sensitivity[idx]
                                                     : 1.0 - perf.specificity[idx];
      p *= r == TestResult::kPositive ? p_positive : 1.0 - p_positive;
    }
    total += p;
  }
  return total;
}

double marginal_obs_prob(const CharacterizationMap& map, const TestPerformance& perf,
                         std::span<const double> pi, const ObservedOutcome& obs) {
  if (static_cast<int>(pi.size()) != map.num_compartments()) {
    throw InvalidInputError("state dimension does not match the map's compartments");
  }
  double total = 0.0;
  for (int y = 0; y < map.num_compartments(); ++y) {
    const double w = pi[static_cast<std::size_t>(y)];
    if (w == 0.0) continue;
    total += conditional_obs_prob(map, perf, y, obs) * w;
  }
  return total;
}

double marginal_positive_prob(const CharacterizationMap& map, const TestPerformance& perf,
                              std::span<const double> pi, int test) {
  if (test < 0 || test >= map.num_tests()) throw InvalidInputError("test index out of range");
  ObservedOutcome obs = ObservedOutcome::all_missing(map.num_tests());
  obs.results[static_cast<std::size_t>(test)] = TestResult::kPositive;
  return marginal_obs_prob(map, perf, pi, obs);
}

}  // namespace pairedepi
