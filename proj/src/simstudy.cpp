#include "pairedepi/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "pairedepi/csvio.hpp"
#include "pairedepi/diagnostics.hpp"

namespace pairedepi {

std::string to_string(Cadence cadence) {
  switch (cadence) {
    case Cadence::kMonthly: return "monthly";
    case Cadence::kBiweekly: return "biweekly";
    case Cadence::kWeekly: return "weekly";
  }
  return "?";
}

std::string to_string(Allocation allocation) {
  switch (allocation) {
    case Allocation::kEqual: return "equal";
    case Allocation::kUniformRandom: return "uniform";
    case Allocation::kEarly: return "early";
    case Allocation::kMiddle: return "middle";
    case Allocation::kLate: return "late";
  }
  return "?";
}

std::string to_string(Streams streams) {
  switch (streams) {
    case Streams::kPaired: return "paired";
    case Streams::kPcrOnly: return "pcr";
    case Streams::kSerologyOnly: return "serology";
  }
  return "?";
}

Cadence cadence_from_string(std::string_view text) {
  if (text == "monthly") return Cadence::kMonthly;
  if (text == "biweekly") return Cadence::kBiweekly;
  if (text == "weekly") return Cadence::kWeekly;
  throw InvalidInputError("unknown cadence: '" + std::string(text) + "'");
}

Allocation allocation_from_string(std::string_view text) {
  if (text == "equal") return Allocation::kEqual;
  if (text == "uniform") return Allocation::kUniformRandom;
  if (text == "early") return Allocation::kEarly;
  if (text == "middle") return Allocation::kMiddle;
  if (text == "late") return Allocation::kLate;
  throw InvalidInputError("unknown allocation: '" + std::string(text) + "'");
}

Streams streams_from_string(std::string_view text) {
  if (text == "paired") return Streams::kPaired;
  if (text == "pcr") return Streams::kPcrOnly;
  if (text == "serology") return Streams::kSerologyOnly;
  throw InvalidInputError("unknown streams choice: '" + std::string(text) + "'");
}

std::vector<SamplingPeriod> cadence_periods(Cadence cadence) {
  std::vector<SamplingPeriod> periods;
  int length = 30;
  if (cadence == Cadence::kBiweekly) length = 15;
  if (cadence == Cadence::kWeekly) length = 7;
  for (int first = 1; first <= kStudyHorizonDays; first += length) {
    periods.push_back({first, std::min(first + length - 1, kStudyHorizonDays)});
  }
  return periods;
}

std::string StudyDesign::id() const {
  return "n" + std::to_string(total_samples) + "_" + to_string(cadence) + "_" +
         to_string(allocation) + "_" + to_string(streams);
}

void StudyDesign::validate() const {
  if (std::find(kStudySampleSizes.begin(), kStudySampleSizes.end(), total_samples) ==
      kStudySampleSizes.end()) {
    throw InvalidInputError("total_samples must be one of 10, 50, 100, 200, 500");
  }
  const auto periods = cadence_periods(cadence);
  if (total_samples < static_cast<int>(periods.size())) {
    throw InvalidInputError("design " + id() + " rejected: " + to_string(cadence) +
                            " sampling would require at least " +
                            std::to_string(periods.size()) + " samples");
  }
}

std::vector<StudyDesign> enumerate_designs() {
  std::vector<StudyDesign> designs;
  for (int n : kStudySampleSizes) {
    for (Cadence cadence : {Cadence::kMonthly, Cadence::kBiweekly, Cadence::kWeekly}) {
      if (n == 10 && cadence == Cadence::kWeekly) continue;
      for (Allocation allocation :
           {Allocation::kEqual, Allocation::kUniformRandom, Allocation::kEarly,
            Allocation::kMiddle, Allocation::kLate}) {
        for (Streams streams : {Streams::kPaired, Streams::kPcrOnly, Streams::kSerologyOnly}) {
          StudyDesign design{n, cadence, allocation, streams};
          design.validate();
          designs.push_back(design);
        }
      }
    }
  }
  return designs;
}

StudyDesign design_from_id(std::string_view id) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= id.size(); ++k) {
    if (k == id.size() || id[k] == '_') {
      parts.emplace_back(id.substr(start, k - start));
      start = k + 1;
    }
  }
  if (parts.size() != 4 || parts[0].size() < 2 || parts[0][0] != 'n') {
    throw InvalidInputError("design id must look like n100_biweekly_equal_paired, got '" +
                            std::string(id) + "'");
  }
  StudyDesign design;
  design.total_samples = static_cast<int>(parse_long(parts[0].substr(1), "design size"));
  design.cadence = cadence_from_string(parts[1]);
  design.allocation = allocation_from_string(parts[2]);
  design.streams = streams_from_string(parts[3]);
  design.validate();
  return design;
}

int SamplingSchedule::total() const {
  int sum = 0;
  for (int c : count) sum += c;
  return sum;
}

SamplingSchedule draw_schedule(const StudyDesign& design, Rng& rng) {
  design.validate();
  const auto periods = cadence_periods(design.cadence);
  const int P = static_cast<int>(periods.size());

  SamplingSchedule schedule;
  for (const auto& period : periods) {
    schedule.day.push_back(rng.uniform_int(period.first_day, period.last_day));
  }

  if (design.allocation == Allocation::kEqual) {
    const int base = design.total_samples / P;
    const int remainder = design.total_samples % P;
    for (int p = 0; p < P; ++p) schedule.count.push_back(base + (p < remainder ? 1 : 0));
    return schedule;
  }

  std::vector<double> weights(static_cast<std::size_t>(P), 1.0);
  for (int p = 1; p <= P; ++p) {
    double w = 1.0;
    switch (design.allocation) {
      case Allocation::kEarly: w = static_cast<double>(P - p + 1); break;
      case Allocation::kLate: w = static_cast<double>(p); break;
      case Allocation::kMiddle: w = static_cast<double>(std::min(p, P + 1 - p)); break;
      default: break;
    }
    weights[static_cast<std::size_t>(p - 1)] = w;
  }
  schedule.count = rng.multinomial(design.total_samples, weights);
  return schedule;
}

ObservedOutcome draw_observed_outcome(const CharacterizationMap& map,
                                      const TestPerformance& performance, int compartment,
                                      Rng& rng) {
  const int J = map.num_tests();
  const auto& preimage = map.preimage(compartment);
  unsigned bits = preimage.front();
  if (preimage.size() > 1) {
    std::vector<double> w;
    for (unsigned t : preimage) w.push_back(map.weight(t));
    bits = preimage[rng.categorical(w)];
  }
  ObservedOutcome outcome;
  outcome.results.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    const bool truly_positive = outcome_bit(bits, J, j) != 0;
    const double p_observed_positive =
        truly_positive ? performance.sensitivity[static_cast<std::size_t>(j)]
                       : 1.0 - performance.specificity[static_cast<std::size_t>(j)];
    outcome.results[static_cast<std::size_t>(j)] =
        rng.uniform() < p_observed_positive ? TestResult::kPositive : TestResult::kNegative;
  }
  return outcome;
}

SurveillanceDataset simulate_dataset(const Trajectory& trajectory,
                                     const SamplingSchedule& schedule,
                                     const CharacterizationMap& map,
                                     const TestPerformance& performance, Streams streams,
                                     Rng& rng) {
  if (schedule.day.size() != schedule.count.size()) {
    throw InvalidInputError("schedule days and counts disagree");
  }
  performance.validate(map.num_tests());
  if (map.num_compartments() != trajectory.num_compartments()) {
    throw InvalidInputError("map and trajectory compartment counts disagree");
  }

  SurveillanceDataset data;
  data.records.reserve(static_cast<std::size_t>(schedule.total()));
  std::vector<double> pi(static_cast<std::size_t>(trajectory.num_compartments()));
  int next_id = 1;
  for (std::size_t p = 0; p < schedule.day.size(); ++p) {
    const double tau = schedule.day[p];
    trajectory.state_at(tau, pi);
    for (int k = 0; k < schedule.count[p]; ++k) {
      const int y = static_cast<int>(rng.categorical(pi));
      SurveillanceRecord rec;
      rec.id = "h" + std::to_string(next_id++);
      rec.time = tau;
      rec.outcome = draw_observed_outcome(map, performance, y, rng);
      data.records.push_back(std::move(rec));
    }
  }

  if (streams == Streams::kPcrOnly) return data.masked_to_tests({0});
  if (streams == Streams::kSerologyOnly) return data.masked_to_tests({1});
  return data;
}

namespace {

const std::vector<std::string> kCrpsParams = {"r0", "beta", "gamma", "eta"};

ReplicateResult run_replicate(const StudyDesign& design, const StudyOptions& options,
                              const Trajectory& truth_trajectory, int replicate) {
  ReplicateResult result;
  result.design_id = design.id();
  result.replicate = replicate;
  result.seed = mix_seed(mix_seed(options.master_seed, fnv1a64(design.id())),
                         static_cast<std::uint64_t>(replicate));
  try {
    Rng rng(result.seed);
    const SamplingSchedule schedule = draw_schedule(design, rng);
    const CharacterizationMap map = sibr_map();
    const SurveillanceDataset data = simulate_dataset(truth_trajectory, schedule, map,
                                                      options.truth.performance,
                                                      design.streams, rng);

    FitSpec spec;
    spec.model = ModelKind::kSibr;
    spec.map = map;
    spec.performance = PerformanceSpec::fixed(options.truth.performance);
    spec.priors.r0 = gamma_hyperparams_from_moments(2.5, 100.0);
    spec.priors.gamma = gamma_hyperparams_from_moments(2.0, 2.0);
    spec.priors.eta = gamma_hyperparams_from_moments(2.0, 2.0);
    spec.priors.tau0 = NormalPrior{0.0, 100.0};
    spec.init_state = options.truth.init;

    McmcConfig mcmc = options.mcmc;
    mcmc.seed = mix_seed(result.seed, 0x5eedc4a1);
    mcmc.threads = 1;
    const auto chains = posterior_sample(data, spec, mcmc);
    const auto report = convergence_diagnostics(chains);
    result.converged = report.ok;

    const SibrParams& truth = options.truth.params;
    const std::map<std::string, double> truth_values = {
        {"r0", truth.beta / truth.gamma},
        {"beta", truth.beta},
        {"gamma", truth.gamma},
        {"eta", truth.eta}};
    for (const auto& param : kCrpsParams) {
      const auto draws = pooled_param(chains, param);
      result.crps[param] = crps_empirical(draws, truth_values.at(param));
      result.relative_crps[param] = relative_crps(draws, truth_values.at(param));
    }
  } catch (const std::exception& e) {
    result.failed = true;
    result.failure = e.what();
  }
  return result;
}

}  // namespace

StudyResult run_study(std::span<const StudyDesign> designs, const StudyOptions& options) {
  if (options.n_reps < 1) throw InvalidInputError("run_study needs n_reps >= 1");
  for (const auto& design : designs) design.validate();

  const Trajectory truth_trajectory =
      integrate(ModelParams(options.truth.params),
                make_state(ModelKind::kSibr, options.truth.init), options.truth.t0,
                static_cast<double>(kStudyHorizonDays));

  struct Task {
    std::size_t design_index;
    int replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t d = 0; d < designs.size(); ++d) {
    for (int r = 0; r < options.n_reps; ++r) tasks.push_back({d, r});
  }

  StudyResult study;
  study.replicates.resize(tasks.size());
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      study.replicates[t] = run_replicate(designs[tasks[t].design_index], options,
                                          truth_trajectory, tasks[t].replicate);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= tasks.size()) return;
          study.replicates[t] = run_replicate(designs[tasks[t].design_index], options,
                                              truth_trajectory, tasks[t].replicate);
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  // tasks are grouped by design in order, n_reps each
  for (std::size_t d = 0; d < designs.size(); ++d) {
    const std::string id = designs[d].id();
    const std::size_t first = d * static_cast<std::size_t>(options.n_reps);
    int n_failed = 0;
    for (int r = 0; r < options.n_reps; ++r) {
      n_failed += study.replicates[first + static_cast<std::size_t>(r)].failed;
    }
    for (const auto& param : kCrpsParams) {
      DesignAggregate agg;
      agg.design_id = id;
      agg.param = param;
      agg.n_failed = n_failed;
      double sum = 0.0;
      for (int r = 0; r < options.n_reps; ++r) {
        const auto& rep = study.replicates[first + static_cast<std::size_t>(r)];
        if (rep.failed) continue;
        sum += rep.relative_crps.at(param);
        agg.n_ok += 1;
      }
      agg.mean_relative_crps = agg.n_ok > 0 ? sum / agg.n_ok : 0.0;
      study.aggregates.push_back(agg);
    }
  }
  for (const auto& rep : study.replicates) study.n_failed += rep.failed;
  return study;
}

std::string designs_csv(std::span<const StudyDesign> designs) {
  std::ostringstream out;
  out << "design_id,total_samples,cadence,allocation,streams\n";
  for (const auto& d : designs) {
    out << d.id() << ',' << d.total_samples << ',' << to_string(d.cadence) << ','
        << to_string(d.allocation) << ',' << to_string(d.streams) << '\n';
  }
  return out.str();
}

std::string replicates_csv(std::span<const ReplicateResult> replicates) {
  std::ostringstream out;
  out << "design_id,replicate,seed,param,crps,relative_crps,converged\n";
  for (const auto& rep : replicates) {
    if (rep.failed) {
      out << rep.design_id << ',' << rep.replicate << ',' << rep.seed
          << ",failed,NA,NA,0\n";
      continue;
    }
    for (const auto& [param, crps] : rep.crps) {
      out << rep.design_id << ',' << rep.replicate << ',' << rep.seed << ',' << param << ','
          << fmt_double(crps) << ',' << fmt_double(rep.relative_crps.at(param)) << ','
          << (rep.converged ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string aggregates_csv(std::span<const DesignAggregate> aggregates) {
  std::ostringstream out;
  out << "design_id,param,mean_relative_crps,n_ok,n_failed\n";
  for (const auto& agg : aggregates) {
    out << agg.design_id << ',' << agg.param << ',' << fmt_double(agg.mean_relative_crps) << ','
        << agg.n_ok << ',' << agg.n_failed << '\n';
  }
  return out.str();
}

}  // namespace pairedepi
