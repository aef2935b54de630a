#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pairedepi/inference.hpp"
#include "pairedepi/rng.hpp"

namespace pairedepi {

enum class Cadence { kMonthly, kBiweekly, kWeekly };
enum class Allocation { kEqual, kUniformRandom, kEarly, kMiddle, kLate };
enum class Streams { kPaired, kPcrOnly, kSerologyOnly };

std::string to_string(Cadence cadence);
std::string to_string(Allocation allocation);
std::string to_string(Streams streams);
Cadence cadence_from_string(std::string_view text);
Allocation allocation_from_string(std::string_view text);
Streams streams_from_string(std::string_view text);

/// Day-1-based sampling horizon of the study grid.
inline constexpr int kStudyHorizonDays = 90;
inline const std::vector<int> kStudySampleSizes = {10, 50, 100, 200, 500};

/// One cell of the study grid: how many individuals, visit cadence, how
/// samples spread over visits, and which test streams the analysis keeps.
struct StudyDesign {
  int total_samples = 100;
  Cadence cadence = Cadence::kBiweekly;
  Allocation allocation = Allocation::kEqual;
  Streams streams = Streams::kPaired;

  std::string id() const;
  /// Rejects sizes off the grid and the 10-sample weekly cell (13 periods
  /// need at least 13 samples).
  void validate() const;
};

/// Sampling periods for a cadence: monthly = 3 x 30 days, biweekly =
/// 6 x 15 days, weekly = 13 periods of 7 days (the last has 6).
struct SamplingPeriod {
  int first_day = 1;
  int last_day = 1;
};
std::vector<SamplingPeriod> cadence_periods(Cadence cadence);

/// The full valid cross-product of sizes x cadences x allocations x streams;
/// 14 valid size-by-cadence cells times 5 allocations (the 70 sampling
/// designs) times 3 stream choices.
std::vector<StudyDesign> enumerate_designs();

/// Parses "n<size>_<cadence>_<allocation>_<streams>" back into a design.
StudyDesign design_from_id(std::string_view id);

/// One sampled day per period plus per-period sample counts.
struct SamplingSchedule {
  std::vector<int> day;
  std::vector<int> count;
  int total() const;
};

/// Uniformly random day within each period; counts per the allocation rule
/// (equal splits deterministically, remainder to the earliest periods; the
/// random rules draw a multinomial with uniform, early-, middle-, or
/// late-weighted period probabilities).
SamplingSchedule draw_schedule(const StudyDesign& design, Rng& rng);

/// True outcome drawn from the compartment's preimage weights, then observed
/// results through the sensitivity/specificity kernel.
ObservedOutcome draw_observed_outcome(const CharacterizationMap& map,
                                      const TestPerformance& performance, int compartment,
                                      Rng& rng);

/// Each individual draws a compartment from pi(tau) at its sampled day, a
/// true outcome from the map's within-compartment weights, and observed
/// results through the sensitivity/specificity kernel; the stream choice
/// masks unused tests to missing.
SurveillanceDataset simulate_dataset(const Trajectory& trajectory,
                                     const SamplingSchedule& schedule,
                                     const CharacterizationMap& map,
                                     const TestPerformance& performance, Streams streams,
                                     Rng& rng);

/// Generating model for study replicates.
struct StudyTruth {
  SibrParams params{0.357, 0.143, 0.429};
  std::vector<double> init{0.999, 0.001, 0.0, 0.0};
  double t0 = 0.0;
  TestPerformance performance = TestPerformance::perfect(2);
};

struct StudyOptions {
  int n_reps = 50;
  std::uint64_t master_seed = 1;
  int threads = 1;
  StudyTruth truth;
  /// Per-replicate sampler settings (desk-scale defaults; the paper-scale
  /// budget is reached by raising n_reps and iterations).
  McmcConfig mcmc{2, 16000, 8000, 8, 0, 1};
};

struct ReplicateResult {
  std::string design_id;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> crps;
  std::map<std::string, double> relative_crps;
  bool converged = false;
  bool failed = false;
  std::string failure;
};

struct DesignAggregate {
  std::string design_id;
  std::string param;
  double mean_relative_crps = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

struct StudyResult {
  std::vector<ReplicateResult> replicates;
  std::vector<DesignAggregate> aggregates;
  int n_failed = 0;
};

/// Runs n_reps replicates per design: schedule, dataset, posterior, CRPS per
/// parameter. Replicate r depends only on (master_seed, design id, r), so
/// results are identical for any thread count or execution order.
StudyResult run_study(std::span<const StudyDesign> designs, const StudyOptions& options);

std::string designs_csv(std::span<const StudyDesign> designs);
std::string replicates_csv(std::span<const ReplicateResult> replicates);
std::string aggregates_csv(std::span<const DesignAggregate> aggregates);

}  // namespace pairedepi
