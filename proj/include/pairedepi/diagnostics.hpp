#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pairedepi/inference.hpp"

namespace pairedepi {

/// Per-stream Bernoulli log-scores for one fitted model/data configuration.
/// Higher is better; the combined score is the sum over scored tests.
struct ScoreReport {
  std::string location;
  std::string model;
  std::string data_config;
  std::vector<int> scored_tests;
  std::vector<double> per_test_score;  // aligned with scored_tests
  double combined = 0.0;
  /// Records whose observed entry contradicts a degenerate (0 or 1)
  /// positivity estimate; each contributes -infinity to the score.
  std::vector<std::string> zero_prob_records;
};

/// Posterior-mean positivity probability p_hj per record and scored test:
/// the mean over retained draws of marginal_positive_prob at pi(tau_h).
/// max_draws 0 keeps every draw, otherwise draws are subsampled evenly.
std::vector<std::vector<double>> posterior_positive_probs(
    std::span<const PosteriorChain> chains, const FitSpec& spec,
    const SurveillanceDataset& data, std::span<const int> tests, int max_draws = 0);

ScoreReport log_score(std::span<const PosteriorChain> chains, const FitSpec& spec,
                      const SurveillanceDataset& data, std::span<const int> scored_tests,
                      int max_draws = 0);

/// CSV rows `location,model,data_config,score_pcr,score_serology,score_combined`;
/// unscored cells are left empty.
std::string score_reports_csv(std::span<const ScoreReport> reports);

/// Empirical CRPS: mean |x_i - y| - mean pairwise |x_i - x_k| / 2.
double crps_empirical(std::span<const double> draws, double truth);

/// CRPS divided by the (positive) true value.
double relative_crps(std::span<const double> draws, double truth);

struct PpcBin {
  int test = 0;
  double bin_start = 0.0;
  double bin_end = 0.0;
  double observed_rate = 0.0;
  long n_obs = 0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

struct PpcSummary {
  std::vector<PpcBin> bins;
  int n_reps = 0;
  double bin_width = 14.0;
  /// (test, bin_start) cells with no observed entries, dropped from bins.
  std::vector<std::pair<int, double>> dropped_bins;

  /// Fraction of bins whose observed rate falls inside [q025, q975].
  double band_coverage() const;
  /// CSV `test,bin_start,bin_end,observed_rate,n_obs,q025,q50,q975`.
  std::string to_csv(std::span<const std::string> test_names) const;
};

/// Simulates n_reps replicate datasets at the observed record times (one per
/// subsampled posterior draw, missingness pattern preserved), bins positivity
/// per test, and summarizes replicate quantile bands against observed rates.
PpcSummary posterior_predictive(std::span<const PosteriorChain> chains, const FitSpec& spec,
                                const SurveillanceDataset& data, int n_reps,
                                double bin_width, std::uint64_t seed);

}  // namespace pairedepi
