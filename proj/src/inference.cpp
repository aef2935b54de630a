#include "pairedepi/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "pairedepi/csvio.hpp"
#include "pairedepi/rng.hpp"

namespace pairedepi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBadObjective = 1e100;

double log1pexp(double x) { return x > 35.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

// ---------------------------------------------------------------------------
// dataset

void SurveillanceDataset::validate(int num_tests) const {
  for (std::size_t h = 0; h < records.size(); ++h) {
    const auto& rec = records[h];
    if (rec.outcome.num_tests() != num_tests) {
      throw InvalidInputError("record '" + rec.id + "' has " +
                              std::to_string(rec.outcome.num_tests()) + " test entries, expected " +
                              std::to_string(num_tests));
    }
    if (!std::isfinite(rec.time)) {
      throw InvalidInputError("record '" + rec.id + "' has a non-finite time");
    }
  }
}

SurveillanceDataset SurveillanceDataset::masked_to_tests(const std::vector<int>& keep_tests) const {
  SurveillanceDataset out = *this;
  for (auto& rec : out.records) {
    for (int j = 0; j < rec.outcome.num_tests(); ++j) {
      if (std::find(keep_tests.begin(), keep_tests.end(), j) == keep_tests.end()) {
        rec.outcome.results[static_cast<std::size_t>(j)] = TestResult::kMissing;
      }
    }
  }
  return out;
}

SurveillanceDataset SurveillanceDataset::from_csv(const std::string& text,
                                                  std::span<const std::string> test_names) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InvalidInputError("dataset CSV is empty");
  const auto header = split_csv_line(lines[0]);
  if (header.size() != test_names.size() + 2 || header[0] != "id" || header[1] != "time") {
    throw InvalidInputError("dataset header must be 'id,time," + [&] {
      std::string joined;
      for (std::size_t j = 0; j < test_names.size(); ++j) {
        joined += (j ? "," : "") + test_names[j];
      }
      return joined;
    }() + "'");
  }
  for (std::size_t j = 0; j < test_names.size(); ++j) {
    if (header[j + 2] != test_names[j]) {
      throw InvalidInputError("dataset column '" + header[j + 2] + "' does not match test '" +
                              test_names[j] + "'");
    }
  }

  SurveillanceDataset data;
  data.records.reserve(lines.size() - 1);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::string row_label = "row " + std::to_string(k + 1);
    const auto cells = split_csv_line(lines[k]);
    if (cells.size() != header.size()) {
      throw InvalidInputError(row_label + ": expected " + std::to_string(header.size()) +
                              " cells, found " + std::to_string(cells.size()));
    }
    SurveillanceRecord rec;
    rec.id = cells[0];
    rec.time = parse_double(cells[1], row_label + " time");
    rec.outcome.results.resize(test_names.size());
    for (std::size_t j = 0; j < test_names.size(); ++j) {
      const std::string& cell = cells[j + 2];
      if (cell == "1") {
        rec.outcome.results[j] = TestResult::kPositive;
      } else if (cell == "0") {
        rec.outcome.results[j] = TestResult::kNegative;
      } else if (cell == "NA") {
        rec.outcome.results[j] = TestResult::kMissing;
      } else {
        throw InvalidInputError(row_label + ": test cell must be 1, 0, or NA, found '" + cell +
                                "'");
      }
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::string SurveillanceDataset::to_csv(std::span<const std::string> test_names) const {
  std::ostringstream out;
  out << "id,time";
  for (const auto& name : test_names) out << ',' << name;
  out << '\n';
  for (const auto& rec : records) {
    out << rec.id << ',' << fmt_double(rec.time);
    for (TestResult r : rec.outcome.results) {
      out << ',' << (r == TestResult::kPositive ? "1" : r == TestResult::kNegative ? "0" : "NA");
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// priors

void GammaPrior::validate() const {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw InvalidInputError("gamma prior needs positive shape and rate");
  }
}

double GammaPrior::log_pdf(double x) const {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

void NormalPrior::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean)) {
    throw InvalidInputError("normal prior needs finite mean and positive variance");
  }
}

double NormalPrior::log_pdf(double x) const {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * M_PI * variance) - 0.5 * d * d / variance;
}

void BetaPrior::validate() const {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidInputError("beta prior needs positive a and b");
  }
}

double BetaPrior::log_pdf(double x) const {
  if (!(x > 0.0) || !(x < 1.0)) return -kInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

void DirichletPrior::validate() const {
  if (concentration.size() < 2) throw InvalidInputError("dirichlet prior needs >= 2 components");
  for (double a : concentration) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw InvalidInputError("dirichlet concentrations must be positive");
    }
  }
}

double DirichletPrior::log_pdf(std::span<const double> pi) const {
  if (pi.size() != concentration.size()) {
    throw InvalidInputError("dirichlet dimension mismatch");
  }
  double lp = std::lgamma(std::accumulate(concentration.begin(), concentration.end(), 0.0));
  for (std::size_t c = 0; c < pi.size(); ++c) {
    if (!(pi[c] > 0.0)) return -kInf;
    lp += (concentration[c] - 1.0) * std::log(pi[c]) - std::lgamma(concentration[c]);
  }
  return lp;
}

GammaPrior gamma_hyperparams_from_moments(double mean, double variance) {
  if (!(mean > 0.0) || !(variance > 0.0)) {
    throw InvalidInputError("gamma moment matching needs positive mean and variance");
  }
  return GammaPrior{mean * mean / variance, mean / variance};
}

double beta_from_r0(double r0, double gamma) {
  if (!(r0 > 0.0) || !(gamma > 0.0)) {
    throw InvalidInputError("beta_from_r0 needs positive arguments");
  }
  return r0 * gamma;
}

BetaPrior beta_posterior_from_counts(int successes, int trials, double prior_a, double prior_b) {
  if (successes < 0 || trials < successes) {
    throw InvalidInputError("need 0 <= successes <= trials");
  }
  BetaPrior prior{prior_a, prior_b};
  prior.validate();
  return BetaPrior{prior_a + successes, prior_b + (trials - successes)};
}

// ---------------------------------------------------------------------------
// analysis configuration

PerformanceSpec PerformanceSpec::fixed(const TestPerformance& perf) {
  PerformanceSpec spec;
  for (double v : perf.sensitivity) spec.sensitivity.push_back({v, std::nullopt});
  for (double v : perf.specificity) spec.specificity.push_back({v, std::nullopt});
  return spec;
}

void PerformanceSpec::validate(int num_tests) const {
  if (static_cast<int>(sensitivity.size()) != num_tests ||
      static_cast<int>(specificity.size()) != num_tests) {
    throw InvalidInputError("performance spec does not match the number of tests");
  }
  for (const auto& list : {sensitivity, specificity}) {
    for (const auto& entry : list) {
      if (entry.prior.has_value()) {
        entry.prior->validate();
      } else if (!(entry.value >= 0.0) || !(entry.value <= 1.0)) {
        throw InvalidInputError("fixed performance values must lie in [0,1]");
      }
    }
  }
}

int PerformanceSpec::num_estimated() const {
  int n = 0;
  for (const auto& entry : sensitivity) n += entry.estimated();
  for (const auto& entry : specificity) n += entry.estimated();
  return n;
}

void PriorSpec::validate() const {
  r0.validate();
  gamma.validate();
  eta.validate();
  if (tau0.has_value()) tau0->validate();
  if (!std::isfinite(fixed_tau0)) throw InvalidInputError("fixed tau0 must be finite");
  if (init_state.has_value()) init_state->validate();
}

ModelParams ThetaVector::model_params() const {
  if (model == ModelKind::kSir) return SirParams{beta, gamma};
  if (!eta.has_value()) throw InvalidInputError("sibr parameters need eta");
  return SibrParams{beta, gamma, *eta};
}

void ThetaVector::validate() const {
  validate_params(model_params());
  CompartmentState state{init_state, compartment_labels(model)};
  state.validate();
  if (!std::isfinite(tau0)) throw InvalidInputError("tau0 must be finite");
  performance.validate(static_cast<int>(performance.sensitivity.size()));
}

std::vector<double> FitSpec::resolved_init() const {
  if (!init_state.empty()) return init_state;
  if (model == ModelKind::kSir) return {0.999, 0.001, 0.0};
  return {0.999, 0.001, 0.0, 0.0};
}

void FitSpec::validate() const {
  if (map.num_compartments() != num_compartments(model)) {
    throw InvalidInputError("map has " + std::to_string(map.num_compartments()) +
                            " compartments but the model has " +
                            std::to_string(num_compartments(model)));
  }
  performance.validate(map.num_tests());
  priors.validate();
  const auto init = resolved_init();
  CompartmentState state{init, compartment_labels(model)};
  state.validate();
  if (priors.init_state.has_value() &&
      priors.init_state->concentration.size() != init.size()) {
    throw InvalidInputError("dirichlet prior dimension does not match the model");
  }
  if (!(integrate_step > 0.0)) throw InvalidInputError("integrate_step must be positive");
}

// ---------------------------------------------------------------------------
// parameter layout and transforms

namespace {

// Unconstrained coordinates: log r0, log gamma, [log eta], [tau0],
// [C-1 additive log-ratio coords], [logit sens...], [logit spec...].
struct ParamLayout {
  ModelKind model = ModelKind::kSibr;
  int C = 4;
  bool has_eta = true;
  bool est_tau0 = true;
  bool est_init = false;
  std::vector<int> est_sens, est_spec;
  int dim = 0;
  int off_tau0 = -1, off_init = -1, off_sens = -1, off_spec = -1;

  static ParamLayout make(const FitSpec& spec) {
    ParamLayout lay;
    lay.model = spec.model;
    lay.C = num_compartments(spec.model);
    lay.has_eta = spec.model == ModelKind::kSibr;
    lay.est_tau0 = spec.priors.tau0.has_value();
    lay.est_init = spec.priors.init_state.has_value();
    for (int j = 0; j < spec.map.num_tests(); ++j) {
      if (spec.performance.sensitivity[static_cast<std::size_t>(j)].estimated()) {
        lay.est_sens.push_back(j);
      }
      if (spec.performance.specificity[static_cast<std::size_t>(j)].estimated()) {
        lay.est_spec.push_back(j);
      }
    }
    int d = 2 + (lay.has_eta ? 1 : 0);
    if (lay.est_tau0) lay.off_tau0 = d++;
    if (lay.est_init) {
      lay.off_init = d;
      d += lay.C - 1;
    }
    lay.off_sens = d;
    d += static_cast<int>(lay.est_sens.size());
    lay.off_spec = d;
    d += static_cast<int>(lay.est_spec.size());
    lay.dim = d;
    return lay;
  }

  void theta_from_z(const FitSpec& spec, std::span<const double> z, ThetaVector& theta) const {
    theta.model = model;
    const double r0_val = std::exp(z[0]);
    theta.gamma = std::exp(z[1]);
    theta.beta = r0_val * theta.gamma;
    theta.eta = has_eta ? std::optional<double>(std::exp(z[2])) : std::nullopt;
    theta.tau0 = est_tau0 ? z[static_cast<std::size_t>(off_tau0)] : spec.priors.fixed_tau0;
    if (est_init) {
      theta.init_state.resize(static_cast<std::size_t>(C));
      double m = 0.0;
      for (int c = 0; c + 1 < C; ++c) {
        m = std::max(m, z[static_cast<std::size_t>(off_init + c)]);
      }
      double denom = std::exp(-m);
      for (int c = 0; c + 1 < C; ++c) {
        denom += std::exp(z[static_cast<std::size_t>(off_init + c)] - m);
      }
      for (int c = 0; c + 1 < C; ++c) {
        theta.init_state[static_cast<std::size_t>(c)] =
            std::exp(z[static_cast<std::size_t>(off_init + c)] - m) / denom;
      }
      theta.init_state[static_cast<std::size_t>(C - 1)] = std::exp(-m) / denom;
    } else {
      theta.init_state = spec.resolved_init();
    }
    const int J = spec.map.num_tests();
    theta.performance.sensitivity.resize(static_cast<std::size_t>(J));
    theta.performance.specificity.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
      theta.performance.sensitivity[static_cast<std::size_t>(j)] =
          spec.performance.sensitivity[static_cast<std::size_t>(j)].value;
      theta.performance.specificity[static_cast<std::size_t>(j)] =
          spec.performance.specificity[static_cast<std::size_t>(j)].value;
    }
    for (std::size_t k = 0; k < est_sens.size(); ++k) {
      theta.performance.sensitivity[static_cast<std::size_t>(est_sens[k])] =
          sigmoid(z[static_cast<std::size_t>(off_sens) + k]);
    }
    for (std::size_t k = 0; k < est_spec.size(); ++k) {
      theta.performance.specificity[static_cast<std::size_t>(est_spec[k])] =
          sigmoid(z[static_cast<std::size_t>(off_spec) + k]);
    }
  }

  std::vector<double> z_from_theta(const ThetaVector& theta) const {
    std::vector<double> z(static_cast<std::size_t>(dim));
    z[0] = std::log(theta.beta / theta.gamma);
    z[1] = std::log(theta.gamma);
    if (has_eta) z[2] = std::log(*theta.eta);
    if (est_tau0) z[static_cast<std::size_t>(off_tau0)] = theta.tau0;
    if (est_init) {
      const double last = std::max(theta.init_state[static_cast<std::size_t>(C - 1)], 1e-300);
      for (int c = 0; c + 1 < C; ++c) {
        z[static_cast<std::size_t>(off_init + c)] =
            std::log(std::max(theta.init_state[static_cast<std::size_t>(c)], 1e-300) / last);
      }
    }
    for (std::size_t k = 0; k < est_sens.size(); ++k) {
      z[static_cast<std::size_t>(off_sens) + k] =
          logit(theta.performance.sensitivity[static_cast<std::size_t>(est_sens[k])]);
    }
    for (std::size_t k = 0; k < est_spec.size(); ++k) {
      z[static_cast<std::size_t>(off_spec) + k] =
          logit(theta.performance.specificity[static_cast<std::size_t>(est_spec[k])]);
    }
    return z;
  }

  // prior density of theta plus the log Jacobian of the transform to z
  double log_prior_jacobian(const FitSpec& spec, std::span<const double> z,
                            const ThetaVector& theta) const {
    const double r0_val = theta.beta / theta.gamma;
    double lp = spec.priors.r0.log_pdf(r0_val) + z[0];
    lp += spec.priors.gamma.log_pdf(theta.gamma) + z[1];
    if (has_eta) lp += spec.priors.eta.log_pdf(*theta.eta) + z[2];
    if (est_tau0) lp += spec.priors.tau0->log_pdf(theta.tau0);
    if (est_init) {
      lp += spec.priors.init_state->log_pdf(theta.init_state);
      for (double p : theta.init_state) {
        if (!(p > 0.0)) return -kInf;
        lp += std::log(p);
      }
    }
    for (std::size_t k = 0; k < est_sens.size(); ++k) {
      const double u = z[static_cast<std::size_t>(off_sens) + k];
      const double lx = -log1pexp(-u);
      const double l1mx = -log1pexp(u);
      const auto& prior = *spec.performance.sensitivity[static_cast<std::size_t>(est_sens[k])].prior;
      lp += std::lgamma(prior.a + prior.b) - std::lgamma(prior.a) - std::lgamma(prior.b) +
            (prior.a - 1.0) * lx + (prior.b - 1.0) * l1mx + lx + l1mx;
    }
    for (std::size_t k = 0; k < est_spec.size(); ++k) {
      const double u = z[static_cast<std::size_t>(off_spec) + k];
      const double lx = -log1pexp(-u);
      const double l1mx = -log1pexp(u);
      const auto& prior = *spec.performance.specificity[static_cast<std::size_t>(est_spec[k])].prior;
      lp += std::lgamma(prior.a + prior.b) - std::lgamma(prior.a) - std::lgamma(prior.b) +
            (prior.a - 1.0) * lx + (prior.b - 1.0) * l1mx + lx + l1mx;
    }
    return lp;
  }

  std::vector<std::string> report_names(const FitSpec& spec) const {
    std::vector<std::string> names = {"r0", "beta", "gamma"};
    if (has_eta) names.push_back("eta");
    if (est_tau0) names.push_back("tau0");
    if (est_init) {
      for (const auto& label : compartment_labels(model)) names.push_back("init_" + label);
    }
    for (int j : est_sens) {
      names.push_back("sens_" + spec.map.test_names()[static_cast<std::size_t>(j)]);
    }
    for (int j : est_spec) {
      names.push_back("spec_" + spec.map.test_names()[static_cast<std::size_t>(j)]);
    }
    return names;
  }

  std::vector<double> report_row(const ThetaVector& theta) const {
    std::vector<double> row = {theta.beta / theta.gamma, theta.beta, theta.gamma};
    if (has_eta) row.push_back(*theta.eta);
    if (est_tau0) row.push_back(theta.tau0);
    if (est_init) {
      row.insert(row.end(), theta.init_state.begin(), theta.init_state.end());
    }
    for (int j : est_sens) {
      row.push_back(theta.performance.sensitivity[static_cast<std::size_t>(j)]);
    }
    for (int j : est_spec) {
      row.push_back(theta.performance.specificity[static_cast<std::size_t>(j)]);
    }
    return row;
  }

  // default per-coordinate proposal / simplex scales
  std::vector<double> coordinate_scales() const {
    std::vector<double> s(static_cast<std::size_t>(dim), 0.3);
    if (est_tau0) s[static_cast<std::size_t>(off_tau0)] = 3.0;
    for (std::size_t k = 0; k < est_sens.size(); ++k) {
      s[static_cast<std::size_t>(off_sens) + k] = 0.5;
    }
    for (std::size_t k = 0; k < est_spec.size(); ++k) {
      s[static_cast<std::size_t>(off_spec) + k] = 0.5;
    }
    return s;
  }
};

ThetaVector draw_theta_from_priors(const FitSpec& spec, const ParamLayout& lay, Rng& rng) {
  ThetaVector theta;
  theta.model = spec.model;
  double r0_draw = 1.0;
  // redraw implausible rate draws so starts land where the search can move
  for (int attempt = 0; attempt < 50; ++attempt) {
    r0_draw = rng.gamma(spec.priors.r0.shape, spec.priors.r0.rate);
    theta.gamma = rng.gamma(spec.priors.gamma.shape, spec.priors.gamma.rate);
    if (lay.has_eta) theta.eta = rng.gamma(spec.priors.eta.shape, spec.priors.eta.rate);
    const double beta = r0_draw * theta.gamma;
    const bool ok = r0_draw > 1e-3 && r0_draw < 1e3 && theta.gamma > 1e-3 &&
                    theta.gamma < 1e2 && beta > 1e-6 && beta < kMaxRatePerDay &&
                    (!lay.has_eta || (*theta.eta > 1e-3 && *theta.eta < 1e2));
    if (ok) break;
  }
  theta.beta = r0_draw * theta.gamma;
  theta.tau0 = lay.est_tau0
                   ? spec.priors.tau0->mean + rng.normal() * std::sqrt(spec.priors.tau0->variance)
                   : spec.priors.fixed_tau0;
  if (lay.est_init) {
    theta.init_state = rng.dirichlet(spec.priors.init_state->concentration);
    for (double& p : theta.init_state) p = std::max(p, 1e-12);
  } else {
    theta.init_state = spec.resolved_init();
  }
  const int J = spec.map.num_tests();
  theta.performance.sensitivity.resize(static_cast<std::size_t>(J));
  theta.performance.specificity.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    const auto& se = spec.performance.sensitivity[static_cast<std::size_t>(j)];
    const auto& sp = spec.performance.specificity[static_cast<std::size_t>(j)];
    theta.performance.sensitivity[static_cast<std::size_t>(j)] =
        se.estimated() ? std::clamp(rng.beta(se.prior->a, se.prior->b), 1e-6, 1.0 - 1e-6)
                       : se.value;
    theta.performance.specificity[static_cast<std::size_t>(j)] =
        sp.estimated() ? std::clamp(rng.beta(sp.prior->a, sp.prior->b), 1e-6, 1.0 - 1e-6)
                       : sp.value;
  }
  return theta;
}

// Grouped likelihood: records collapse to (distinct time, outcome pattern)
// counts, so each evaluation integrates once and scores a handful of
// patterns per time.
class LogLikEvaluator {
 public:
  LogLikEvaluator(const SurveillanceDataset& data, const CharacterizationMap& map, double step)
      : map_(map), step_(step) {
    std::map<double, std::map<std::uint64_t, std::pair<ObservedOutcome, long>>> grouped;
    for (const auto& rec : data.records) {
      std::uint64_t code = 0;
      for (TestResult r : rec.outcome.results) {
        code = code * 3 + static_cast<std::uint64_t>(r);
      }
      auto& slot = grouped[rec.time][code];
      if (slot.second == 0) slot.first = rec.outcome;
      slot.second += 1;
    }
    for (auto& [time, pats] : grouped) {
      times_.push_back(time);
      auto& list = patterns_.emplace_back();
      for (auto& [code, pat] : pats) list.emplace_back(std::move(pat.first), pat.second);
    }
    probe_buf_.resize(times_.size() * static_cast<std::size_t>(map_.num_compartments()));
  }

  bool empty() const { return times_.empty(); }

  double operator()(const ThetaVector& theta) const {
    const int C = num_compartments(theta.model);
    if (!plausible_rates(theta)) return -kInf;
    if (times_.empty()) return 0.0;

    const double t0 = theta.tau0;
    const auto split = static_cast<std::size_t>(
        std::lower_bound(times_.begin(), times_.end(), t0) - times_.begin());
    if (split < times_.size()) {
      // whole-step horizon so probes interpolate between full grid states,
      // exactly as state_at on an exported trajectory would
      const double n_steps = std::ceil((times_.back() - t0) / step_ - 1e-9);
      double t_end = t0 + std::max(n_steps, 0.0) * step_;
      if (t_end < times_.back()) t_end = t0 + (std::max(n_steps, 0.0) + 1.0) * step_;
      const std::span<const double> probes(times_.data() + split, times_.size() - split);
      std::span<double> probe_out(probe_buf_.data() + split * static_cast<std::size_t>(C),
                                  probes.size() * static_cast<std::size_t>(C));
      if (t_end > t0) {
        integrate_at(theta.model_params(), theta.init_state, t0, t_end, step_, probes,
                     probe_out);
      } else {
        for (std::size_t k = 0; k < probes.size(); ++k) {
          std::copy(theta.init_state.begin(), theta.init_state.end(),
                    probe_out.begin() + static_cast<std::ptrdiff_t>(k * C));
        }
      }
    }

    double ll = 0.0;
    for (std::size_t k = 0; k < times_.size(); ++k) {
      const std::span<const double> pi =
          k < split ? std::span<const double>(theta.init_state)
                    : std::span<const double>(
                          probe_buf_.data() + k * static_cast<std::size_t>(C),
                          static_cast<std::size_t>(C));
      for (const auto& [obs, count] : patterns_[k]) {
        const double p = marginal_obs_prob(map_, theta.performance, pi, obs);
        if (!(p > 0.0)) return -kInf;
        ll += static_cast<double>(count) * std::log(p);
      }
    }
    return ll;
  }

 private:
  static bool plausible_rates(const ThetaVector& theta) {
    const bool base = std::isfinite(theta.beta) && theta.beta > 0.0 &&
                      theta.beta <= kMaxRatePerDay && std::isfinite(theta.gamma) &&
                      theta.gamma > 0.0 && theta.gamma <= kMaxRatePerDay &&
                      std::isfinite(theta.tau0);
    if (!base) return false;
    if (theta.model == ModelKind::kSibr) {
      return theta.eta.has_value() && std::isfinite(*theta.eta) && *theta.eta > 0.0 &&
             *theta.eta <= kMaxRatePerDay;
    }
    return true;
  }

  const CharacterizationMap& map_;
  double step_;
  std::vector<double> times_;
  std::vector<std::vector<std::pair<ObservedOutcome, long>>> patterns_;
  mutable std::vector<double> probe_buf_;
};

}  // namespace

std::vector<std::string> report_param_names(const FitSpec& spec) {
  return ParamLayout::make(spec).report_names(spec);
}

ThetaVector theta_from_row(const FitSpec& spec, std::span<const double> row) {
  const ParamLayout lay = ParamLayout::make(spec);
  const auto names = lay.report_names(spec);
  if (row.size() != names.size()) {
    throw InvalidInputError("draw row has " + std::to_string(row.size()) +
                            " values, expected " + std::to_string(names.size()));
  }
  ThetaVector theta;
  theta.model = spec.model;
  theta.beta = row[1];
  theta.gamma = row[2];
  std::size_t k = 3;
  if (lay.has_eta) theta.eta = row[k++];
  theta.tau0 = lay.est_tau0 ? row[k++] : spec.priors.fixed_tau0;
  if (lay.est_init) {
    theta.init_state.assign(row.begin() + static_cast<std::ptrdiff_t>(k),
                            row.begin() + static_cast<std::ptrdiff_t>(k + lay.C));
    k += static_cast<std::size_t>(lay.C);
  } else {
    theta.init_state = spec.resolved_init();
  }
  const int J = spec.map.num_tests();
  theta.performance.sensitivity.resize(static_cast<std::size_t>(J));
  theta.performance.specificity.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    theta.performance.sensitivity[static_cast<std::size_t>(j)] =
        spec.performance.sensitivity[static_cast<std::size_t>(j)].value;
    theta.performance.specificity[static_cast<std::size_t>(j)] =
        spec.performance.specificity[static_cast<std::size_t>(j)].value;
  }
  for (int j : lay.est_sens) theta.performance.sensitivity[static_cast<std::size_t>(j)] = row[k++];
  for (int j : lay.est_spec) theta.performance.specificity[static_cast<std::size_t>(j)] = row[k++];
  return theta;
}

double log_likelihood(const ThetaVector& theta, const SurveillanceDataset& data,
                      const CharacterizationMap& map) {
  theta.validate();
  data.validate(map.num_tests());
  if (num_compartments(theta.model) != map.num_compartments()) {
    throw InvalidInputError("model and map compartment counts disagree");
  }
  const LogLikEvaluator eval(data, map, kDefaultStep);
  return eval(theta);
}

// ---------------------------------------------------------------------------
// Nelder-Mead

namespace {

struct NmOutcome {
  std::vector<double> z;
  double f = kBadObjective;
  long iters = 0;
  bool converged = false;
};

template <class F>
NmOutcome nelder_mead(F&& objective, const std::vector<double>& z0,
                      std::span<const double> scales, int max_iters, double ftol) {
  const std::size_t d = z0.size();
  std::vector<std::vector<double>> pts(d + 1, z0);
  for (std::size_t k = 0; k < d; ++k) pts[k + 1][k] += scales[k];
  std::vector<double> fs(d + 1);
  for (std::size_t k = 0; k <= d; ++k) fs[k] = objective(pts[k]);

  std::vector<std::size_t> order(d + 1);
  NmOutcome out;
  for (long iter = 0; iter < max_iters; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order[0];
    const std::size_t worst = order[d];
    const std::size_t second_worst = order[d - 1];
    out.iters = iter + 1;
    if (std::abs(fs[worst] - fs[best]) < ftol) {
      out.converged = true;
      break;
    }

    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k <= d; ++k) {
      if (k == worst) continue;
      for (std::size_t c = 0; c < d; ++c) centroid[c] += pts[k][c];
    }
    for (double& c : centroid) c /= static_cast<double>(d);

    auto blend = [&](double coef) {
      std::vector<double> p(d);
      for (std::size_t c = 0; c < d; ++c) {
        p[c] = centroid[c] + coef * (pts[worst][c] - centroid[c]);
      }
      return p;
    };

    auto reflected = blend(-1.0);
    const double fr = objective(reflected);
    if (fr < fs[best]) {
      auto expanded = blend(-2.0);
      const double fe = objective(expanded);
      if (fe < fr) {
        pts[worst] = std::move(expanded);
        fs[worst] = fe;
      } else {
        pts[worst] = std::move(reflected);
        fs[worst] = fr;
      }
    } else if (fr < fs[second_worst]) {
      pts[worst] = std::move(reflected);
      fs[worst] = fr;
    } else {
      auto contracted = blend(fr < fs[worst] ? -0.5 : 0.5);
      const double fc = objective(contracted);
      if (fc < std::min(fr, fs[worst])) {
        pts[worst] = std::move(contracted);
        fs[worst] = fc;
      } else {
        for (std::size_t k = 0; k <= d; ++k) {
          if (k == best) continue;
          for (std::size_t c = 0; c < d; ++c) {
            pts[k][c] = pts[best][c] + 0.5 * (pts[k][c] - pts[best][c]);
          }
          fs[k] = objective(pts[k]);
        }
      }
    }
  }
  const auto best_it = std::min_element(fs.begin(), fs.end());
  out.f = *best_it;
  out.z = pts[static_cast<std::size_t>(best_it - fs.begin())];
  return out;
}

}  // namespace

MleResult mle_fit(const SurveillanceDataset& data, const FitSpec& spec,
                  const MleOptions& options) {
  spec.validate();
  data.validate(spec.map.num_tests());
  if (data.records.empty()) throw InvalidInputError("mle_fit needs at least one record");
  if (options.starts < 1) throw InvalidInputError("mle_fit needs at least one start");

  const ParamLayout lay = ParamLayout::make(spec);
  const LogLikEvaluator eval(data, spec.map, spec.integrate_step);
  ThetaVector scratch;
  auto objective = [&](const std::vector<double>& z) {
    lay.theta_from_z(spec, z, scratch);
    try {
      const double ll = eval(scratch);
      return std::isfinite(ll) ? -ll : kBadObjective;
    } catch (const IntegrationInstabilityError&) {
      return kBadObjective;
    }
  };

  const auto scales = lay.coordinate_scales();
  std::vector<NmOutcome> outcomes;
  long total_iters = 0;
  for (int s = 0; s < options.starts; ++s) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(s)));
    const ThetaVector start = draw_theta_from_priors(spec, lay, rng);
    auto outcome =
        nelder_mead(objective, lay.z_from_theta(start), scales, options.max_iters, options.ftol);
    total_iters += outcome.iters;
    outcomes.push_back(std::move(outcome));
  }

  const auto best_it = std::min_element(
      outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) { return a.f < b.f; });
  const NmOutcome& best = *best_it;

  MleResult result;
  result.param_names = lay.report_names(spec);
  result.starts = options.starts;
  result.total_iterations = total_iters;
  ThetaVector theta;
  lay.theta_from_z(spec, best.z, theta);
  result.estimate = theta;
  result.report_row = lay.report_row(theta);
  result.log_likelihood = -best.f;
  result.converged = best.converged;
  for (const auto& o : outcomes) result.converged_starts += o.converged;

  // boundary / identifiability checks on the optimum and near-best starts
  const double r0_hat = theta.beta / theta.gamma;
  const bool extreme = r0_hat < 1e-4 || r0_hat > 1e4 || theta.gamma < 1e-4 ||
                       theta.beta < 1e-6 || theta.beta > kMaxRatePerDay ||
                       theta.gamma > kMaxRatePerDay ||
                       (theta.eta.has_value() && (*theta.eta < 1e-4 || *theta.eta > kMaxRatePerDay)) ||
                       std::abs(theta.tau0) > 1e3;
  if (extreme) {
    result.boundary_flag = true;
    result.warnings.push_back("estimate sits at a parameter bound");
  }
  const int n_rate_coords = 2 + (lay.has_eta ? 1 : 0);
  double spread = 0.0;
  for (const auto& o : outcomes) {
    if (!o.converged || !(o.f < kBadObjective)) continue;
    if (o.f - best.f > 1e-3 * std::max(1.0, std::abs(best.f))) continue;
    for (int c = 0; c < n_rate_coords; ++c) {
      spread = std::max(spread, std::abs(o.z[static_cast<std::size_t>(c)] -
                                         best.z[static_cast<std::size_t>(c)]));
    }
  }
  result.near_best_param_spread = spread;
  if (spread > 0.5) {
    result.boundary_flag = true;
    result.warnings.push_back(
        "near-best starts disagree on parameters; likelihood looks flat (unidentifiable)");
  }

  if (result.converged_starts == 0) {
    throw MleNonConvergenceError("no optimizer start converged within the iteration budget",
                                 std::move(result));
  }
  return result;
}

// ---------------------------------------------------------------------------
// adaptive random-walk Metropolis

void McmcConfig::validate() const {
  if (chains < 2) throw InvalidInputError("posterior_sample needs at least 2 chains");
  if (iterations < 1000) throw InvalidInputError("posterior_sample needs >= 1000 iterations");
  const long burn = resolved_burn_in();
  if (burn < 0 || burn >= iterations) throw InvalidInputError("burn_in must lie in [0, iterations)");
  if (thin < 1) throw InvalidInputError("thin must be >= 1");
  if ((iterations - burn) / thin < 1) {
    throw InvalidInputError("no draws retained after burn-in and thinning");
  }
  if (threads < 1) throw InvalidInputError("threads must be >= 1");
}

namespace {

// lower-triangular Cholesky; false when the matrix is not positive definite
bool cholesky(const std::vector<double>& a, int d, std::vector<double>& l) {
  l.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<std::size_t>(i) * d + j];
      for (int k = 0; k < j; ++k) {
        sum -= l[static_cast<std::size_t>(i) * d + k] * l[static_cast<std::size_t>(j) * d + k];
      }
      if (i == j) {
        if (!(sum > 0.0)) return false;
        l[static_cast<std::size_t>(i) * d + j] = std::sqrt(sum);
      } else {
        l[static_cast<std::size_t>(i) * d + j] = sum / l[static_cast<std::size_t>(j) * d + j];
      }
    }
  }
  return true;
}

PosteriorChain run_chain(const SurveillanceDataset& data, const FitSpec& spec,
                         const McmcConfig& config, int chain_id) {
  const ParamLayout lay = ParamLayout::make(spec);
  const LogLikEvaluator eval(data, spec.map, spec.integrate_step);
  const int d = lay.dim;
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(chain_id)));

  ThetaVector scratch;
  auto log_post = [&](const std::vector<double>& z) {
    lay.theta_from_z(spec, z, scratch);
    double ll = 0.0;
    try {
      ll = eval(scratch);
    } catch (const IntegrationInstabilityError&) {
      return -kInf;
    }
    if (ll == -kInf) return -kInf;
    return ll + lay.log_prior_jacobian(spec, z, scratch);
  };

  std::vector<double> z;
  double lp = -kInf;
  for (int attempt = 0; attempt < 100 && !(lp > -kInf); ++attempt) {
    z = lay.z_from_theta(draw_theta_from_priors(spec, lay, rng));
    lp = log_post(z);
  }
  if (!(lp > -kInf)) {
    throw McmcInitializationError("chain " + std::to_string(chain_id) +
                                  ": no finite log-posterior initialization in 100 attempts");
  }

  const long burn = config.resolved_burn_in();
  const double target_accept = d == 1 ? 0.44 : 0.234;
  const auto scales = lay.coordinate_scales();

  // proposal = exp(log_s) * L * eps; L adapts to the running covariance
  std::vector<double> chol_l(static_cast<std::size_t>(d) * d, 0.0);
  for (int c = 0; c < d; ++c) {
    chol_l[static_cast<std::size_t>(c) * d + c] = scales[static_cast<std::size_t>(c)];
  }
  double log_s = 0.0;

  std::vector<double> run_mean(z.begin(), z.end());
  std::vector<double> run_m(static_cast<std::size_t>(d) * d, 0.0);
  long run_n = 1;

  PosteriorChain chain;
  chain.chain_id = chain_id;
  chain.burn_in = burn;
  chain.thin = config.thin;
  chain.param_names = lay.report_names(spec);

  std::vector<double> proposal(static_cast<std::size_t>(d));
  std::vector<double> eps(static_cast<std::size_t>(d));
  std::vector<double> delta(static_cast<std::size_t>(d));
  std::vector<double> cov(static_cast<std::size_t>(d) * d);
  std::vector<double> chol_try;
  long accepted_post = 0;
  long post_iters = 0;

  for (long iter = 1; iter <= config.iterations; ++iter) {
    for (int c = 0; c < d; ++c) eps[static_cast<std::size_t>(c)] = rng.normal();
    const double step_scale = std::exp(log_s);
    for (int r = 0; r < d; ++r) {
      double dz = 0.0;
      for (int c = 0; c <= r; ++c) {
        dz += chol_l[static_cast<std::size_t>(r) * d + c] * eps[static_cast<std::size_t>(c)];
      }
      proposal[static_cast<std::size_t>(r)] = z[static_cast<std::size_t>(r)] + step_scale * dz;
    }
    const double lp_new = log_post(proposal);
    const double log_alpha = lp_new - lp;
    double alpha = 0.0;
    if (lp_new > -kInf) {
      alpha = log_alpha >= 0.0 ? 1.0 : std::exp(std::max(log_alpha, -745.0));
    }
    const double u = rng.uniform();
    const bool accept = lp_new > -kInf && (log_alpha >= 0.0 || u < alpha);
    if (accept) {
      z = proposal;
      lp = lp_new;
    }

    if (iter <= burn) {
      // running mean / covariance over visited states
      run_n += 1;
      for (int c = 0; c < d; ++c) {
        delta[static_cast<std::size_t>(c)] =
            z[static_cast<std::size_t>(c)] - run_mean[static_cast<std::size_t>(c)];
        run_mean[static_cast<std::size_t>(c)] +=
            delta[static_cast<std::size_t>(c)] / static_cast<double>(run_n);
      }
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c <= r; ++c) {
          run_m[static_cast<std::size_t>(r) * d + c] +=
              delta[static_cast<std::size_t>(r)] *
              (z[static_cast<std::size_t>(c)] - run_mean[static_cast<std::size_t>(c)]);
        }
      }
      log_s += std::pow(static_cast<double>(iter), -0.6) * (alpha - target_accept);
      log_s = std::clamp(log_s, -15.0, 15.0);
      if (iter % 50 == 0 && run_n > 2 * d + 4) {
        const double factor = 5.6644 / static_cast<double>(d);  // 2.38^2 / d
        for (int r = 0; r < d; ++r) {
          for (int c = 0; c <= r; ++c) {
            const double v = factor * run_m[static_cast<std::size_t>(r) * d + c] /
                             static_cast<double>(run_n - 1);
            cov[static_cast<std::size_t>(r) * d + c] = v;
            cov[static_cast<std::size_t>(c) * d + r] = v;
          }
          cov[static_cast<std::size_t>(r) * d + r] += 1e-10;
        }
        if (cholesky(cov, d, chol_try)) chol_l = chol_try;
      }
    } else {
      post_iters += 1;
      accepted_post += accept;
      if ((iter - burn) % config.thin == 0) {
        lay.theta_from_z(spec, z, scratch);
        chain.draws.push_back(lay.report_row(scratch));
        chain.iteration.push_back(iter);
        chain.log_posterior.push_back(lp);
      }
    }
  }
  chain.acceptance_rate =
      post_iters > 0 ? static_cast<double>(accepted_post) / static_cast<double>(post_iters) : 0.0;
  return chain;
}

}  // namespace

std::vector<PosteriorChain> posterior_sample(const SurveillanceDataset& data,
                                             const FitSpec& spec, const McmcConfig& config) {
  spec.validate();
  data.validate(spec.map.num_tests());
  config.validate();

  std::vector<PosteriorChain> chains(static_cast<std::size_t>(config.chains));
  if (config.threads > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.chains));
    for (int c = 0; c < config.chains; ++c) {
      workers.emplace_back([&, c] {
        try {
          chains[static_cast<std::size_t>(c)] = run_chain(data, spec, config, c);
        } catch (...) {
          errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (int c = 0; c < config.chains; ++c) {
      chains[static_cast<std::size_t>(c)] = run_chain(data, spec, config, c);
    }
  }
  return chains;
}

// ---------------------------------------------------------------------------
// chain summaries

namespace {

double sequence_mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sequence_var(std::span<const double> x, double mean) {
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

}  // namespace

ConvergenceReport convergence_diagnostics(std::span<const PosteriorChain> chains,
                                          double threshold) {
  if (chains.empty() || chains[0].draws.empty()) {
    throw InvalidInputError("convergence diagnostics need non-empty chains");
  }
  ConvergenceReport report;
  report.param_names = chains[0].param_names;
  report.threshold = threshold;
  const std::size_t n_params = report.param_names.size();

  std::size_t min_len = chains[0].draws.size();
  for (const auto& c : chains) min_len = std::min(min_len, c.draws.size());
  const std::size_t half = min_len / 2;

  for (std::size_t p = 0; p < n_params; ++p) {
    // split each chain into halves for the scale-reduction statistic
    std::vector<std::vector<double>> seqs;
    for (const auto& c : chains) {
      std::vector<double> a, b;
      for (std::size_t k = 0; k < half; ++k) a.push_back(c.draws[k][p]);
      for (std::size_t k = half; k < 2 * half; ++k) b.push_back(c.draws[k][p]);
      seqs.push_back(std::move(a));
      seqs.push_back(std::move(b));
    }
    double rhat = 1.0;
    if (half >= 2) {
      const auto m = static_cast<double>(seqs.size());
      const auto n = static_cast<double>(half);
      std::vector<double> means;
      double w = 0.0;
      for (const auto& s : seqs) {
        const double mu = sequence_mean(s);
        means.push_back(mu);
        w += sequence_var(s, mu);
      }
      w /= m;
      const double grand = sequence_mean(means);
      double b = 0.0;
      for (double mu : means) b += (mu - grand) * (mu - grand);
      b *= n / (m - 1.0);
      if (w > 0.0) {
        rhat = std::sqrt(((n - 1.0) / n * w + b / n) / w);
      } else {
        rhat = b > 0.0 ? kInf : 1.0;
      }
    }
    report.rhat.push_back(rhat);

    // effective sample size via Geyer initial positive sequences, per chain
    double ess = 0.0;
    for (const auto& c : chains) {
      std::vector<double> x;
      x.reserve(c.draws.size());
      for (const auto& row : c.draws) x.push_back(row[p]);
      const double mu = sequence_mean(x);
      const double var = sequence_var(x, mu) * (static_cast<double>(x.size()) - 1.0) /
                         static_cast<double>(x.size());
      if (!(var > 0.0)) {
        ess += static_cast<double>(x.size());
        continue;
      }
      double tau = 1.0;
      const std::size_t max_lag = std::min<std::size_t>(x.size() - 1, 1000);
      for (std::size_t lag = 1; lag + 1 < max_lag; lag += 2) {
        double rho_a = 0.0, rho_b = 0.0;
        for (std::size_t k = 0; k + lag < x.size(); ++k) {
          rho_a += (x[k] - mu) * (x[k + lag] - mu);
        }
        for (std::size_t k = 0; k + lag + 1 < x.size(); ++k) {
          rho_b += (x[k] - mu) * (x[k + lag + 1] - mu);
        }
        rho_a /= static_cast<double>(x.size()) * var;
        rho_b /= static_cast<double>(x.size()) * var;
        if (rho_a + rho_b <= 0.0) break;
        tau += 2.0 * (rho_a + rho_b);
      }
      ess += static_cast<double>(x.size()) / tau;
    }
    report.ess.push_back(ess);
  }
  report.max_rhat = *std::max_element(report.rhat.begin(), report.rhat.end());
  report.ok = report.max_rhat <= threshold;
  return report;
}

std::vector<double> pooled_param(std::span<const PosteriorChain> chains, std::string_view name) {
  if (chains.empty()) throw InvalidInputError("no chains");
  const auto& names = chains[0].param_names;
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidInputError("unknown parameter: '" + std::string(name) + "'");
  const auto p = static_cast<std::size_t>(it - names.begin());
  std::vector<double> out;
  for (const auto& c : chains) {
    for (const auto& row : c.draws) out.push_back(row[p]);
  }
  return out;
}

Hpdi hpdi(std::vector<double> draws, double mass) {
  if (draws.empty()) throw InvalidInputError("hpdi needs at least one draw");
  if (!(mass > 0.0) || !(mass <= 1.0)) throw InvalidInputError("hpdi mass must lie in (0,1]");
  std::sort(draws.begin(), draws.end());
  const auto n = draws.size();
  auto m = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
  m = std::clamp<std::size_t>(m, 1, n);
  std::size_t best = 0;
  double best_width = kInf;
  for (std::size_t k = 0; k + m <= n; ++k) {
    const double width = draws[k + m - 1] - draws[k];
    if (width < best_width) {
      best_width = width;
      best = k;
    }
  }
  return Hpdi{draws[best], draws[best + m - 1]};
}

std::string posterior_csv(std::span<const PosteriorChain> chains) {
  if (chains.empty()) throw InvalidInputError("no chains to serialize");
  std::ostringstream out;
  out << "chain,iter";
  for (const auto& name : chains[0].param_names) out << ',' << name;
  out << ",log_posterior\n";
  for (const auto& c : chains) {
    for (std::size_t k = 0; k < c.draws.size(); ++k) {
      out << c.chain_id << ',' << c.iteration[k];
      for (double v : c.draws[k]) out << ',' << fmt_double(v);
      out << ',' << fmt_double(c.log_posterior[k]) << '\n';
    }
  }
  return out.str();
}

std::vector<PosteriorChain> posterior_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.size() < 2) throw InvalidInputError("posterior CSV has no draws");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 4 || header[0] != "chain" || header[1] != "iter" ||
      header.back() != "log_posterior") {
    throw InvalidInputError("posterior CSV header must be chain,iter,<params...>,log_posterior");
  }
  const std::vector<std::string> names(header.begin() + 2, header.end() - 1);
  std::map<long, PosteriorChain> by_chain;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto cells = split_csv_line(lines[k]);
    const std::string row_label = "row " + std::to_string(k + 1);
    if (cells.size() != header.size()) {
      throw InvalidInputError(row_label + ": wrong cell count");
    }
    const long chain_id = parse_long(cells[0], row_label + " chain");
    auto& chain = by_chain[chain_id];
    chain.chain_id = static_cast<int>(chain_id);
    chain.param_names = names;
    chain.iteration.push_back(parse_long(cells[1], row_label + " iter"));
    std::vector<double> row;
    for (std::size_t j = 0; j < names.size(); ++j) {
      row.push_back(parse_double(cells[j + 2], row_label + " " + names[j]));
    }
    chain.draws.push_back(std::move(row));
    chain.log_posterior.push_back(parse_double(cells.back(), row_label + " log_posterior"));
  }
  std::vector<PosteriorChain> chains;
  for (auto& [id, chain] : by_chain) chains.push_back(std::move(chain));
  return chains;
}

}  // namespace pairedepi
