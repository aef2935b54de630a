#include "pairedepi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "pairedepi/csvio.hpp"
#include "pairedepi/rng.hpp"
#include "pairedepi/simstudy.hpp"

namespace pairedepi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<double>> pooled_rows(std::span<const PosteriorChain> chains) {
  std::vector<std::vector<double>> rows;
  for (const auto& chain : chains) {
    rows.insert(rows.end(), chain.draws.begin(), chain.draws.end());
  }
  if (rows.empty()) throw InvalidInputError("chains contain no retained draws");
  return rows;
}

std::vector<std::size_t> subsample_indices(std::size_t total, int wanted) {
  std::vector<std::size_t> idx;
  if (wanted <= 0 || static_cast<std::size_t>(wanted) >= total) {
    idx.resize(total);
    for (std::size_t k = 0; k < total; ++k) idx[k] = k;
    return idx;
  }
  idx.resize(static_cast<std::size_t>(wanted));
  for (int k = 0; k < wanted; ++k) {
    idx[static_cast<std::size_t>(k)] =
        static_cast<std::size_t>(k) * total / static_cast<std::size_t>(wanted);
  }
  return idx;
}

// Sorted distinct record times plus each record's index into them.
struct TimeIndex {
  std::vector<double> times;
  std::vector<std::size_t> record_slot;
};

TimeIndex index_times(const SurveillanceDataset& data) {
  TimeIndex ti;
  std::map<double, std::size_t> slots;
  for (const auto& rec : data.records) slots.emplace(rec.time, 0);
  for (auto& [time, slot] : slots) {
    slot = ti.times.size();
    ti.times.push_back(time);
  }
  for (const auto& rec : data.records) ti.record_slot.push_back(slots.at(rec.time));
  return ti;
}

// pi(tau; theta) at each distinct time; times before tau0 sit at the initial
// state, matching the likelihood's pre-outbreak extension.
void states_at_times(const ThetaVector& theta, const FitSpec& spec,
                     std::span<const double> times, std::vector<double>& out) {
  const auto C = static_cast<std::size_t>(num_compartments(theta.model));
  out.resize(times.size() * C);
  const double t0 = theta.tau0;
  const auto split = static_cast<std::size_t>(
      std::lower_bound(times.begin(), times.end(), t0) - times.begin());
  for (std::size_t k = 0; k < split; ++k) {
    std::copy(theta.init_state.begin(), theta.init_state.end(),
              out.begin() + static_cast<std::ptrdiff_t>(k * C));
  }
  if (split < times.size()) {
    const double t_end = times.back();
    std::span<double> probe_out(out.data() + split * C, (times.size() - split) * C);
    if (t_end > t0) {
      integrate_at(theta.model_params(), theta.init_state, t0, t_end, spec.integrate_step,
                   std::span<const double>(times).subspan(split), probe_out);
    } else {
      for (std::size_t k = split; k < times.size(); ++k) {
        std::copy(theta.init_state.begin(), theta.init_state.end(),
                  out.begin() + static_cast<std::ptrdiff_t>(k * C));
      }
    }
  }
}

double quantile_type7(std::span<const double> sorted, double p) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<std::vector<double>> posterior_positive_probs(
    std::span<const PosteriorChain> chains, const FitSpec& spec,
    const SurveillanceDataset& data, std::span<const int> tests, int max_draws) {
  spec.validate();
  data.validate(spec.map.num_tests());
  for (int j : tests) {
    if (j < 0 || j >= spec.map.num_tests()) throw InvalidInputError("test index out of range");
  }
  const auto rows = pooled_rows(chains);
  const auto idx = subsample_indices(rows.size(), max_draws);
  const TimeIndex ti = index_times(data);
  const auto C = static_cast<std::size_t>(num_compartments(spec.model));

  // accumulate positivity per (distinct time, test), then spread to records
  std::vector<double> acc(ti.times.size() * tests.size(), 0.0);
  std::vector<double> states;
  for (std::size_t draw : idx) {
    const ThetaVector theta = theta_from_row(spec, rows[draw]);
    states_at_times(theta, spec, ti.times, states);
    for (std::size_t k = 0; k < ti.times.size(); ++k) {
      const std::span<const double> pi(states.data() + k * C, C);
      for (std::size_t t = 0; t < tests.size(); ++t) {
        acc[k * tests.size() + t] +=
            marginal_positive_prob(spec.map, theta.performance, pi, tests[t]);
      }
    }
  }
  for (double& a : acc) a /= static_cast<double>(idx.size());

  std::vector<std::vector<double>> probs(data.records.size(),
                                         std::vector<double>(tests.size(), 0.0));
  for (std::size_t h = 0; h < data.records.size(); ++h) {
    for (std::size_t t = 0; t < tests.size(); ++t) {
      probs[h][t] = acc[ti.record_slot[h] * tests.size() + t];
    }
  }
  return probs;
}

ScoreReport log_score(std::span<const PosteriorChain> chains, const FitSpec& spec,
                      const SurveillanceDataset& data, std::span<const int> scored_tests,
                      int max_draws) {
  if (scored_tests.empty()) throw InvalidInputError("log_score needs at least one test");
  const auto probs = posterior_positive_probs(chains, spec, data, scored_tests, max_draws);

  ScoreReport report;
  report.scored_tests.assign(scored_tests.begin(), scored_tests.end());
  report.per_test_score.assign(scored_tests.size(), 0.0);
  for (std::size_t h = 0; h < data.records.size(); ++h) {
    const auto& rec = data.records[h];
    for (std::size_t t = 0; t < scored_tests.size(); ++t) {
      const TestResult obs = rec.outcome.results[static_cast<std::size_t>(scored_tests[t])];
      if (obs == TestResult::kMissing) continue;
      const double p = probs[h][t];
      const double mass = obs == TestResult::kPositive ? p : 1.0 - p;
      if (mass <= 0.0) {
        report.per_test_score[t] = -kInf;
        report.zero_prob_records.push_back(rec.id);
        continue;
      }
      report.per_test_score[t] += std::log(mass);
    }
  }
  report.combined = 0.0;
  for (double s : report.per_test_score) report.combined += s;
  return report;
}

std::string score_reports_csv(std::span<const ScoreReport> reports) {
  std::ostringstream out;
  out << "location,model,data_config,score_pcr,score_serology,score_combined\n";
  for (const auto& rep : reports) {
    std::string cells[2];
    bool have[2] = {false, false};
    for (std::size_t t = 0; t < rep.scored_tests.size(); ++t) {
      const int j = rep.scored_tests[t];
      if (j >= 0 && j < 2) {
        cells[j] = fmt_double(rep.per_test_score[t]);
        have[j] = true;
      }
    }
    out << rep.location << ',' << rep.model << ',' << rep.data_config << ',' << cells[0] << ','
        << cells[1] << ',';
    if (have[0] && have[1]) out << fmt_double(rep.combined);
    out << '\n';
  }
  return out.str();
}

double crps_empirical(std::span<const double> draws, double truth) {
  if (draws.empty()) throw InvalidInputError("crps needs at least one draw");
  const auto n = static_cast<double>(draws.size());
  double abs_err = 0.0;
  for (double x : draws) abs_err += std::abs(x - truth);
  abs_err /= n;

  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  double pair_sum = 0.0;  // sum over i<k of x_(k) - x_(i)
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    pair_sum += sorted[j] * (2.0 * static_cast<double>(j) + 1.0 - n);
  }
  return abs_err - pair_sum / (n * n);
}

double relative_crps(std::span<const double> draws, double truth) {
  if (!(truth > 0.0)) throw InvalidInputError("relative crps needs a positive true value");
  return crps_empirical(draws, truth) / truth;
}

double PpcSummary::band_coverage() const {
  if (bins.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& bin : bins) {
    inside += bin.observed_rate >= bin.q025 && bin.observed_rate <= bin.q975;
  }
  return static_cast<double>(inside) / static_cast<double>(bins.size());
}

std::string PpcSummary::to_csv(std::span<const std::string> test_names) const {
  std::ostringstream out;
  out << "test,bin_start,bin_end,observed_rate,n_obs,q025,q50,q975\n";
  for (const auto& bin : bins) {
    out << test_names[static_cast<std::size_t>(bin.test)] << ',' << fmt_double(bin.bin_start)
        << ',' << fmt_double(bin.bin_end) << ',' << fmt_double(bin.observed_rate) << ','
        << bin.n_obs << ',' << fmt_double(bin.q025) << ',' << fmt_double(bin.q50) << ','
        << fmt_double(bin.q975) << '\n';
  }
  return out.str();
}

PpcSummary posterior_predictive(std::span<const PosteriorChain> chains, const FitSpec& spec,
                                const SurveillanceDataset& data, int n_reps,
                                double bin_width, std::uint64_t seed) {
  spec.validate();
  data.validate(spec.map.num_tests());
  if (n_reps < 1) throw InvalidInputError("posterior_predictive needs n_reps >= 1");
  if (!(bin_width > 0.0)) throw InvalidInputError("bin_width must be positive");
  if (data.records.empty()) throw InvalidInputError("posterior_predictive needs records");

  const auto rows = pooled_rows(chains);
  const auto idx = subsample_indices(rows.size(), n_reps);
  const TimeIndex ti = index_times(data);
  const int J = spec.map.num_tests();
  const auto C = static_cast<std::size_t>(num_compartments(spec.model));

  const double origin = ti.times.front();
  const auto bin_of = [&](double t) {
    return static_cast<int>(std::floor((t - origin) / bin_width));
  };
  const int n_bins = bin_of(ti.times.back()) + 1;

  // observed rates and denominators per (bin, test)
  std::vector<long> n_obs(static_cast<std::size_t>(n_bins * J), 0);
  std::vector<long> n_pos(static_cast<std::size_t>(n_bins * J), 0);
  for (const auto& rec : data.records) {
    const int b = bin_of(rec.time);
    for (int j = 0; j < J; ++j) {
      const TestResult r = rec.outcome.results[static_cast<std::size_t>(j)];
      if (r == TestResult::kMissing) continue;
      n_obs[static_cast<std::size_t>(b * J + j)] += 1;
      n_pos[static_cast<std::size_t>(b * J + j)] += r == TestResult::kPositive;
    }
  }

  // replicate rates per (bin, test), one row per replicate
  const auto reps = static_cast<int>(idx.size());
  std::vector<std::vector<double>> rep_rates(
      static_cast<std::size_t>(n_bins * J),
      std::vector<double>(static_cast<std::size_t>(reps), 0.0));
  std::vector<double> states;
  std::vector<long> rep_pos(static_cast<std::size_t>(n_bins * J), 0);
  for (int r = 0; r < reps; ++r) {
    const ThetaVector theta = theta_from_row(spec, rows[idx[static_cast<std::size_t>(r)]]);
    states_at_times(theta, spec, ti.times, states);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    std::fill(rep_pos.begin(), rep_pos.end(), 0);
    for (std::size_t h = 0; h < data.records.size(); ++h) {
      const auto& rec = data.records[h];
      const std::span<const double> pi(states.data() + ti.record_slot[h] * C, C);
      const int y = static_cast<int>(rng.categorical(pi));
      const ObservedOutcome sim = draw_observed_outcome(spec.map, theta.performance, y, rng);
      const int b = bin_of(rec.time);
      for (int j = 0; j < J; ++j) {
        if (rec.outcome.results[static_cast<std::size_t>(j)] == TestResult::kMissing) continue;
        rep_pos[static_cast<std::size_t>(b * J + j)] +=
            sim.results[static_cast<std::size_t>(j)] == TestResult::kPositive;
      }
    }
    for (int cell = 0; cell < n_bins * J; ++cell) {
      if (n_obs[static_cast<std::size_t>(cell)] == 0) continue;
      rep_rates[static_cast<std::size_t>(cell)][static_cast<std::size_t>(r)] =
          static_cast<double>(rep_pos[static_cast<std::size_t>(cell)]) /
          static_cast<double>(n_obs[static_cast<std::size_t>(cell)]);
    }
  }

  PpcSummary summary;
  summary.n_reps = reps;
  summary.bin_width = bin_width;
  for (int b = 0; b < n_bins; ++b) {
    for (int j = 0; j < J; ++j) {
      const auto cell = static_cast<std::size_t>(b * J + j);
      const double bin_start = origin + b * bin_width;
      if (n_obs[cell] == 0) {
        summary.dropped_bins.emplace_back(j, bin_start);
        continue;
      }
      auto& rates = rep_rates[cell];
      std::sort(rates.begin(), rates.end());
      PpcBin bin;
      bin.test = j;
      bin.bin_start = bin_start;
      bin.bin_end = bin_start + bin_width;
      bin.n_obs = n_obs[cell];
      bin.observed_rate = static_cast<double>(n_pos[cell]) / static_cast<double>(n_obs[cell]);
      bin.q025 = quantile_type7(rates, 0.025);
      bin.q50 = quantile_type7(rates, 0.5);
      bin.q975 = quantile_type7(rates, 0.975);
      summary.bins.push_back(bin);
    }
  }
  return summary;
}

}  // namespace pairedepi
