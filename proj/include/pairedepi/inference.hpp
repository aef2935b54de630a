#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairedepi/charmap.hpp"
#include "pairedepi/epimodel.hpp"
#include "pairedepi/errors.hpp"

namespace pairedepi {

/// One sampled individual: collection time in days plus observed results.
struct SurveillanceRecord {
  std::string id;
  double time = 0.0;
  ObservedOutcome outcome;
};

struct SurveillanceDataset {
  std::vector<SurveillanceRecord> records;

  std::size_t size() const { return records.size(); }
  void validate(int num_tests) const;

  /// Copy with every test not in keep_tests set to missing.
  SurveillanceDataset masked_to_tests(const std::vector<int>& keep_tests) const;

  /// Header `id,time,<test name>...`; cells 1, 0, or NA. Parse errors carry
  /// 1-based row numbers.
  static SurveillanceDataset from_csv(const std::string& text,
                                      std::span<const std::string> test_names);
  std::string to_csv(std::span<const std::string> test_names) const;
};

// ---------------------------------------------------------------------------
// prior families

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
  double log_pdf(double x) const;
  double mean() const { return shape / rate; }
  void validate() const;
};

struct NormalPrior {
  double mean = 0.0;
  double variance = 1.0;
  double log_pdf(double x) const;
  void validate() const;
};

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
  double log_pdf(double x) const;
  void validate() const;
};

struct DirichletPrior {
  std::vector<double> concentration;
  double log_pdf(std::span<const double> pi) const;
  void validate() const;
};

/// Moment-matched Gamma: shape = mean^2/variance, rate = mean/variance.
GammaPrior gamma_hyperparams_from_moments(double mean, double variance);

/// beta = R0 * gamma (the joint prior on gamma and R0 induces the beta prior).
double beta_from_r0(double r0, double gamma);

/// Conjugate Beta posterior from a success count under a Beta(prior_a, prior_b)
/// prior; Beta(1,1) (uniform) by default.
BetaPrior beta_posterior_from_counts(int successes, int trials, double prior_a = 1.0,
                                     double prior_b = 1.0);

/// A test's sensitivity or specificity: a fixed value, or estimated under a
/// Beta prior.
struct PerformanceEntry {
  double value = 1.0;
  std::optional<BetaPrior> prior;
  bool estimated() const { return prior.has_value(); }
};

struct PerformanceSpec {
  std::vector<PerformanceEntry> sensitivity;
  std::vector<PerformanceEntry> specificity;
  static PerformanceSpec fixed(const TestPerformance& perf);
  void validate(int num_tests) const;
  int num_estimated() const;
};

/// Priors for the sampled blocks. tau0 disengaged means the outbreak time is
/// fixed at fixed_tau0; init_state engaged means the initial distribution is
/// estimated under a Dirichlet prior instead of being held fixed.
struct PriorSpec {
  GammaPrior r0 = gamma_hyperparams_from_moments(2.5, 100.0);
  GammaPrior gamma = gamma_hyperparams_from_moments(2.0, 2.0);
  GammaPrior eta = gamma_hyperparams_from_moments(2.0, 2.0);
  std::optional<NormalPrior> tau0 = NormalPrior{0.0, 100.0};
  double fixed_tau0 = 0.0;
  std::optional<DirichletPrior> init_state;
  void validate() const;
};

/// Full parameter vector at which the likelihood can be evaluated.
struct ThetaVector {
  ModelKind model = ModelKind::kSibr;
  double beta = 0.0;
  double gamma = 0.0;
  std::optional<double> eta;
  double tau0 = 0.0;
  std::vector<double> init_state;
  TestPerformance performance;

  ModelParams model_params() const;
  void validate() const;
};

/// Model, map, priors, and performance handling for one analysis; everything
/// needed to evaluate data against parameters and to interpret draws.
struct FitSpec {
  ModelKind model = ModelKind::kSibr;
  CharacterizationMap map = sibr_map();
  PerformanceSpec performance = PerformanceSpec::fixed(TestPerformance::perfect(2));
  PriorSpec priors;
  std::vector<double> init_state;  // fixed initial simplex; empty -> model default
  double integrate_step = kDefaultStep;

  void validate() const;
  std::vector<double> resolved_init() const;
};

/// Names of the reported parameter columns for a fit (r0, beta, gamma, ...).
std::vector<std::string> report_param_names(const FitSpec& spec);

/// Reconstructs the parameter vector from one reported draw row.
ThetaVector theta_from_row(const FitSpec& spec, std::span<const double> row);

/// Sum over records of log P(T*_h | pi(tau_h; theta)). Records that predate
/// theta.tau0 are evaluated at the initial state (outbreak not yet started).
/// Returns -infinity when any record has zero probability.
double log_likelihood(const ThetaVector& theta, const SurveillanceDataset& data,
                      const CharacterizationMap& map);

// ---------------------------------------------------------------------------
// maximum likelihood

struct MleOptions {
  int starts = 8;
  int max_iters = 2000;       // Nelder-Mead iterations per start
  double ftol = 1e-8;         // simplex objective spread at convergence
  std::uint64_t seed = 0;
};

struct MleResult {
  ThetaVector estimate;
  std::vector<std::string> param_names;
  std::vector<double> report_row;
  double log_likelihood = 0.0;
  int starts = 0;
  int converged_starts = 0;
  long total_iterations = 0;
  bool converged = false;
  /// Set when the optimum sits at a parameter bound or the near-best starts
  /// disagree on parameters (flat, unidentifiable likelihood).
  bool boundary_flag = false;
  double near_best_param_spread = 0.0;
  std::vector<std::string> warnings;
};

/// Thrown when no start converges within the iteration budget; carries the
/// best point seen so far.
class MleNonConvergenceError : public std::runtime_error {
 public:
  MleNonConvergenceError(const std::string& message, MleResult best_so_far)
      : std::runtime_error(message), best(std::move(best_so_far)) {}
  MleResult best;
};

MleResult mle_fit(const SurveillanceDataset& data, const FitSpec& spec,
                  const MleOptions& options);

// ---------------------------------------------------------------------------
// Bayesian sampling

struct McmcConfig {
  int chains = 4;
  long iterations = 50000;
  long burn_in = -1;  // -1 -> iterations/2
  int thin = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  void validate() const;
  long resolved_burn_in() const { return burn_in < 0 ? iterations / 2 : burn_in; }
};

struct PosteriorChain {
  int chain_id = 0;
  long burn_in = 0;
  int thin = 1;
  std::vector<std::string> param_names;
  std::vector<std::vector<double>> draws;  // natural-space report rows
  std::vector<long> iteration;             // 1-based source iteration per draw
  std::vector<double> log_posterior;
  double acceptance_rate = 0.0;
};

class McmcInitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptive random-walk Metropolis in unconstrained coordinates; proposal
/// covariance adapts during burn-in and is frozen afterwards. Chains are
/// independent (seed derived from config.seed and the chain id) and can run
/// in parallel; results are identical for any thread count.
std::vector<PosteriorChain> posterior_sample(const SurveillanceDataset& data,
                                             const FitSpec& spec, const McmcConfig& config);

// ---------------------------------------------------------------------------
// chain summaries

struct ConvergenceReport {
  std::vector<std::string> param_names;
  std::vector<double> rhat;           // split potential scale reduction
  std::vector<double> ess;            // effective sample size, pooled
  double max_rhat = 0.0;
  bool ok = false;                    // every rhat <= threshold
  double threshold = 1.05;
};

ConvergenceReport convergence_diagnostics(std::span<const PosteriorChain> chains,
                                          double threshold = 1.05);

/// All retained draws of one reported parameter, chains concatenated in id
/// order.
std::vector<double> pooled_param(std::span<const PosteriorChain> chains,
                                 std::string_view name);

struct Hpdi {
  double lo = 0.0;
  double hi = 0.0;
};

/// Shortest interval containing `mass` of the draws.
Hpdi hpdi(std::vector<double> draws, double mass = 0.95);

/// CSV `chain,iter,<parameter names...>,log_posterior`, one row per retained
/// draw.
std::string posterior_csv(std::span<const PosteriorChain> chains);
std::vector<PosteriorChain> posterior_from_csv(const std::string& text);

}  // namespace pairedepi
