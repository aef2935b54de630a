#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pairedepi/diagnostics.hpp"
#include "pairedepi/inference.hpp"
#include "pairedepi/simstudy.hpp"
#include "support/oracles.hpp"
#include "support/stats_ref.hpp"

using namespace pairedepi;

namespace {

const SibrParams kStudyParams{0.357, 0.143, 0.429};

Trajectory study_trajectory(double t_end = 90.0) {
  return integrate(ModelParams(kStudyParams),
                   make_state(ModelKind::kSibr, {0.999, 0.001, 0.0, 0.0}), 0.0, t_end);
}

FitSpec study_spec() {
  FitSpec spec;
  spec.model = ModelKind::kSibr;
  spec.map = sibr_map();
  spec.performance = PerformanceSpec::fixed(TestPerformance::perfect(2));
  spec.priors.r0 = gamma_hyperparams_from_moments(2.5, 100.0);
  spec.priors.gamma = gamma_hyperparams_from_moments(2.0, 2.0);
  spec.priors.eta = gamma_hyperparams_from_moments(2.0, 2.0);
  spec.priors.tau0 = NormalPrior{0.0, 100.0};
  spec.init_state = {0.999, 0.001, 0.0, 0.0};
  return spec;
}

ThetaVector study_theta(double tau0 = 0.0) {
  ThetaVector theta;
  theta.model = ModelKind::kSibr;
  theta.beta = kStudyParams.beta;
  theta.gamma = kStudyParams.gamma;
  theta.eta = kStudyParams.eta;
  theta.tau0 = tau0;
  theta.init_state = {0.999, 0.001, 0.0, 0.0};
  theta.performance = TestPerformance::perfect(2);
  return theta;
}

SurveillanceDataset weekly_paired_dataset(int total, std::uint64_t seed) {
  Rng rng(seed);
  const StudyDesign design{total, Cadence::kWeekly, Allocation::kEqual, Streams::kPaired};
  const auto schedule = draw_schedule(design, rng);
  return simulate_dataset(study_trajectory(), schedule, sibr_map(),
                          TestPerformance::perfect(2), Streams::kPaired, rng);
}

}  // namespace

TEST_CASE("prior densities match reference values") {
  CHECK(GammaPrior{0.0625, 0.025}.log_pdf(2.5) ==
        doctest::Approx(-3.891709148960345).epsilon(1e-12));
  CHECK(GammaPrior{2.0, 1.0}.log_pdf(2.0) ==
        doctest::Approx(-1.3068528194400546).epsilon(1e-12));
  CHECK(NormalPrior{0.0, 100.0}.log_pdf(3.0) ==
        doctest::Approx(-3.2665236261987185).epsilon(1e-12));
  CHECK(BetaPrior{7.0, 6.0}.log_pdf(0.55) ==
        doctest::Approx(1.0409110552471574).epsilon(1e-12));
  CHECK(BetaPrior{41.0, 1.0}.log_pdf(0.99) ==
        doctest::Approx(3.31155863256425).epsilon(1e-12));
  CHECK(GammaPrior{2.0, 1.0}.log_pdf(-1.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("reference cdfs match frozen values") {
  CHECK(statsref::gamma_cdf(0.5, 0.0625, 0.025) ==
        doctest::Approx(0.7853288227506907).epsilon(1e-10));
  CHECK(statsref::gamma_cdf(2.5, 0.0625, 0.025) ==
        doctest::Approx(0.8659272665797065).epsilon(1e-10));
  CHECK(statsref::gamma_cdf(10.0, 0.0625, 0.025) ==
        doctest::Approx(0.9346415524472274).epsilon(1e-10));
  CHECK(statsref::gamma_cdf(1.0, 2.0, 1.0) == doctest::Approx(0.2642411176571153).epsilon(1e-12));
  CHECK(statsref::gamma_cdf(4.0, 2.0, 1.0) == doctest::Approx(0.9084218055563291).epsilon(1e-12));
  CHECK(statsref::beta_cdf(0.5, 7.0, 6.0) == doctest::Approx(0.38720703125).epsilon(1e-12));
}

TEST_CASE("gamma hyperparameters from moments") {
  const auto diffuse = gamma_hyperparams_from_moments(2.5, 100.0);
  CHECK(diffuse.shape == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(diffuse.rate == doctest::Approx(0.025).epsilon(1e-15));
  const auto unit = gamma_hyperparams_from_moments(2.0, 2.0);
  CHECK(unit.shape == 2.0);
  CHECK(unit.rate == 1.0);
  const auto vv = gamma_hyperparams_from_moments(3.7, 3.7);
  CHECK(vv.shape == doctest::Approx(3.7).epsilon(1e-15));
  CHECK(vv.rate == 1.0);
  CHECK_THROWS_AS(gamma_hyperparams_from_moments(-1.0, 1.0), InvalidInputError);
}

TEST_CASE("beta from r0") {
  CHECK(beta_from_r0(2.5, 0.143) == doctest::Approx(0.3575).epsilon(1e-15));
  CHECK(beta_from_r0(1.0, 0.37) == 0.37);
  const double x = 2.7, g = 0.19;
  CHECK(beta_from_r0(x, g) / g == doctest::Approx(x).epsilon(1e-15));
  CHECK_THROWS_AS(beta_from_r0(0.0, 1.0), InvalidInputError);
}

TEST_CASE("conjugate beta posterior from counts") {
  // 6 successes in 11 trials under a uniform prior
  const auto post = beta_posterior_from_counts(6, 11);
  CHECK(post.a == 7.0);
  CHECK(post.b == 6.0);
  const auto spec_post = beta_posterior_from_counts(40, 40);
  CHECK(spec_post.a == 41.0);
  CHECK(spec_post.b == 1.0);
  CHECK_THROWS_AS(beta_posterior_from_counts(5, 3), InvalidInputError);
}

TEST_CASE("dataset csv round trip and errors") {
  const std::vector<std::string> tests = {"pcr", "serology"};
  const std::string csv =
      "id,time,pcr,serology\n"
      "a1,10,1,0\n"
      "a2,24.5,0,NA\n"
      "a3,31,NA,1\n";
  const auto data = SurveillanceDataset::from_csv(csv, tests);
  REQUIRE(data.size() == 3);
  CHECK(data.records[0].id == "a1");
  CHECK(data.records[1].time == 24.5);
  CHECK(data.records[1].outcome.results[1] == TestResult::kMissing);
  CHECK(data.records[2].outcome.results[1] == TestResult::kPositive);
  CHECK(data.to_csv(tests) == csv);

  CHECK_THROWS_WITH_AS(SurveillanceDataset::from_csv("id,time,pcr\nx,1,1\n", tests),
                       doctest::Contains("header"), InvalidInputError);
  CHECK_THROWS_WITH_AS(
      SurveillanceDataset::from_csv("id,time,pcr,serology\nx,1,2,0\n", tests),
      doctest::Contains("row 2"), InvalidInputError);
  CHECK_THROWS_WITH_AS(
      SurveillanceDataset::from_csv("id,time,pcr,serology\nx,zzz,1,0\n", tests),
      doctest::Contains("row 2"), InvalidInputError);
}

TEST_CASE("stream masking") {
  const auto data = weekly_paired_dataset(50, 7);
  const auto pcr_only = data.masked_to_tests({0});
  for (const auto& rec : pcr_only.records) {
    CHECK(rec.outcome.results[1] == TestResult::kMissing);
    CHECK(rec.outcome.results[0] != TestResult::kMissing);
  }
}

TEST_CASE("log likelihood basics") {
  const auto map = sibr_map();
  SUBCASE("empty dataset scores zero") {
    CHECK(log_likelihood(study_theta(), SurveillanceDataset{}, map) == 0.0);
  }
  SUBCASE("certain event scores zero") {
    ThetaVector theta = study_theta();
    theta.init_state = {1.0, 0.0, 0.0, 0.0};  // disease-free: pi stays degenerate
    SurveillanceDataset data;
    data.records.push_back({"h1", 20.0, ObservedOutcome::complete_from_bits(2, 0b00)});
    CHECK(log_likelihood(theta, data, map) == 0.0);
  }
  SUBCASE("impossible record gives -infinity") {
    ThetaVector theta = study_theta();
    theta.init_state = {1.0, 0.0, 0.0, 0.0};
    SurveillanceDataset data;
    data.records.push_back({"h1", 20.0, ObservedOutcome::complete_from_bits(2, 0b10)});
    CHECK(log_likelihood(theta, data, map) == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("log likelihood equals the sum of enumerated marginal terms") {
  const auto map = sibr_map();
  const auto theta = study_theta();
  const auto traj = study_trajectory();
  Rng rng(2025);
  for (int rep = 0; rep < 25; ++rep) {
    SurveillanceDataset data;
    for (int h = 0; h < 10; ++h) {
      SurveillanceRecord rec;
      rec.id = "h" + std::to_string(h);
      rec.time = 1.0 + rng.uniform() * 88.0;
      rec.outcome = ObservedOutcome::complete_from_bits(
          2, static_cast<unsigned>(rng.uniform_int(0, 3)));
      if (rng.uniform() < 0.2) rec.outcome.results[rng.uniform_int(0, 1)] = TestResult::kMissing;
      data.records.push_back(rec);
    }
    double expected = 0.0;
    for (const auto& rec : data.records) {
      const auto pi = traj.state_at(rec.time);
      expected += std::log(oracles::marginal(map, theta.performance, pi.proportions,
                                             rec.outcome));
    }
    CHECK(log_likelihood(theta, data, map) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("log likelihood structural invariants") {
  const auto map = sibr_map();
  const auto theta = study_theta();
  auto data = weekly_paired_dataset(50, 11);

  const double base = log_likelihood(theta, data, map);
  SUBCASE("permutation invariance is exact") {
    auto shuffled = data;
    std::reverse(shuffled.records.begin(), shuffled.records.end());
    std::swap(shuffled.records[3], shuffled.records[17]);
    CHECK(log_likelihood(theta, shuffled, map) == base);
  }
  SUBCASE("subset additivity") {
    SurveillanceDataset a, b;
    for (std::size_t h = 0; h < data.size(); ++h) {
      (h % 3 == 0 ? a : b).records.push_back(data.records[h]);
    }
    const double sum = log_likelihood(theta, a, map) + log_likelihood(theta, b, map);
    CHECK(std::abs(sum - base) <= 1e-12 * std::abs(base));
  }
  SUBCASE("missing entries marginalize the masked test") {
    auto rec = data.records[0];
    rec.outcome.results[1] = TestResult::kMissing;
    SurveillanceDataset solo;
    solo.records.push_back(rec);
    auto pos = rec, neg = rec;
    pos.outcome.results[1] = TestResult::kPositive;
    neg.outcome.results[1] = TestResult::kNegative;
    SurveillanceDataset pos_d, neg_d;
    pos_d.records.push_back(pos);
    neg_d.records.push_back(neg);
    const double marginal = std::exp(log_likelihood(theta, pos_d, map)) +
                            std::exp(log_likelihood(theta, neg_d, map));
    CHECK(log_likelihood(theta, solo, map) == doctest::Approx(std::log(marginal)).epsilon(1e-13));
  }
  SUBCASE("records before tau0 sit at the initial state") {
    ThetaVector shifted = study_theta(50.0);
    SurveillanceDataset early;
    early.records.push_back({"h1", 10.0, ObservedOutcome::complete_from_bits(2, 0b00)});
    const double expected = std::log(marginal_obs_prob(map, shifted.performance,
                                                       shifted.init_state,
                                                       early.records[0].outcome));
    CHECK(log_likelihood(shifted, early, map) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("fixed and estimated performance share one likelihood path") {
  auto data = weekly_paired_dataset(50, 13);
  FitSpec fixed_spec = study_spec();
  fixed_spec.performance = PerformanceSpec::fixed(TestPerformance{{1.0, 0.7}, {1.0, 0.9}});

  FitSpec est_spec = study_spec();
  est_spec.performance.sensitivity[1] = PerformanceEntry{1.0, BetaPrior{7.0, 6.0}};
  est_spec.performance.specificity[1] = PerformanceEntry{1.0, BetaPrior{41.0, 1.0}};

  const std::vector<double> row_fixed = {2.4, 2.4 * 0.143, 0.143, 0.429, 0.0};
  std::vector<double> row_est = row_fixed;
  row_est.push_back(0.7);
  row_est.push_back(0.9);
  const auto theta_a = theta_from_row(fixed_spec, row_fixed);
  const auto theta_b = theta_from_row(est_spec, row_est);
  CHECK(log_likelihood(theta_a, data, fixed_spec.map) ==
        log_likelihood(theta_b, data, est_spec.map));
}

TEST_CASE("report layout round trip") {
  FitSpec spec = study_spec();
  spec.performance.sensitivity[1] = PerformanceEntry{1.0, BetaPrior{7.0, 6.0}};
  const auto names = report_param_names(spec);
  const std::vector<std::string> expected = {"r0", "beta", "gamma", "eta", "tau0",
                                             "sens_serology"};
  CHECK(names == expected);
  const std::vector<double> row = {2.5, 0.3575, 0.143, 0.429, -3.0, 0.55};
  const auto theta = theta_from_row(spec, row);
  CHECK(theta.beta == 0.3575);
  CHECK(theta.tau0 == -3.0);
  CHECK(theta.performance.sensitivity[1] == 0.55);
  CHECK(theta.performance.specificity[1] == 1.0);
}

TEST_CASE("hpdi on known shapes") {
  SUBCASE("point mass") {
    const auto interval = hpdi({3.0, 3.0, 3.0}, 0.95);
    CHECK(interval.lo == 3.0);
    CHECK(interval.hi == 3.0);
  }
  SUBCASE("uniform grid") {
    std::vector<double> draws(1000);
    std::iota(draws.begin(), draws.end(), 0.0);
    const auto interval = hpdi(draws, 0.95);
    CHECK(interval.hi - interval.lo == doctest::Approx(949.0));
  }
  SUBCASE("skewed sample picks the dense side") {
    std::vector<double> draws;
    for (int k = 0; k < 900; ++k) draws.push_back(k * 0.001);
    for (int k = 0; k < 100; ++k) draws.push_back(10.0 + k);
    const auto interval = hpdi(draws, 0.9);
    CHECK(interval.lo == 0.0);
    CHECK(interval.hi <= 1.0);
  }
  CHECK_THROWS_AS(hpdi({}, 0.95), InvalidInputError);
}

TEST_CASE("mle recovers simulated parameters") {
  // simulation-based calibration: median relative error over replicates
  const int reps = 20;
  std::vector<double> err_beta, err_gamma, err_eta;
  int at_least_as_good_as_truth = 0;
  FitSpec spec = study_spec();
  const auto truth = study_theta();
  for (int rep = 0; rep < reps; ++rep) {
    const auto data = weekly_paired_dataset(500, 1000 + static_cast<std::uint64_t>(rep));
    MleOptions options;
    options.starts = 6;
    options.max_iters = 1500;
    options.seed = 555 + static_cast<std::uint64_t>(rep);
    const auto fit = mle_fit(data, spec, options);
    err_beta.push_back(std::abs(fit.estimate.beta - 0.357) / 0.357);
    err_gamma.push_back(std::abs(fit.estimate.gamma - 0.143) / 0.143);
    err_eta.push_back(std::abs(*fit.estimate.eta - 0.429) / 0.429);
    at_least_as_good_as_truth +=
        fit.log_likelihood >= log_likelihood(truth, data, spec.map) - 1e-9;
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(err_beta) < 0.25);
  CHECK(median(err_gamma) < 0.25);
  CHECK(median(err_eta) < 0.25);
  CHECK(at_least_as_good_as_truth == reps);
}

TEST_CASE("mle flags unidentifiable all-negative data") {
  SurveillanceDataset data;
  for (int h = 0; h < 30; ++h) {
    data.records.push_back({"h" + std::to_string(h), 15.0,
                            ObservedOutcome::complete_from_bits(2, 0b00)});
  }
  MleOptions options;
  options.starts = 8;
  options.seed = 31;
  const auto fit = mle_fit(data, study_spec(), options);
  CHECK(fit.boundary_flag);
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("posterior sampling is deterministic and thread-invariant") {
  const auto data = weekly_paired_dataset(50, 21);
  const FitSpec spec = study_spec();
  McmcConfig config;
  config.chains = 2;
  config.iterations = 1500;
  config.burn_in = 700;
  config.thin = 4;
  config.seed = 99;

  const auto a = posterior_sample(data, spec, config);
  const auto b = posterior_sample(data, spec, config);
  McmcConfig threaded = config;
  threaded.threads = 4;
  const auto c = posterior_sample(data, spec, threaded);

  REQUIRE(a.size() == 2);
  REQUIRE(a[0].draws.size() == b[0].draws.size());
  REQUIRE(a[0].draws.size() == c[0].draws.size());
  CHECK(a[0].draws.size() == static_cast<std::size_t>((1500 - 700) / 4));
  for (std::size_t chain = 0; chain < a.size(); ++chain) {
    for (std::size_t k = 0; k < a[chain].draws.size(); ++k) {
      CHECK(a[chain].draws[k] == b[chain].draws[k]);
      CHECK(a[chain].draws[k] == c[chain].draws[k]);
      CHECK(a[chain].log_posterior[k] == c[chain].log_posterior[k]);
    }
  }
  SUBCASE("different seeds move the draws") {
    McmcConfig other = config;
    other.seed = 100;
    const auto d = posterior_sample(data, spec, other);
    CHECK(d[0].draws[0] != a[0].draws[0]);
  }
}

TEST_CASE("prior-only posterior reproduces the priors") {
  FitSpec spec = study_spec();
  McmcConfig config;
  config.chains = 2;
  config.iterations = 30000;
  config.burn_in = 10000;
  config.thin = 10;
  config.seed = 7;
  const auto chains = posterior_sample(SurveillanceDataset{}, spec, config);
  const auto gamma_draws = pooled_param(chains, "gamma");
  const auto tau_draws = pooled_param(chains, "tau0");
  REQUIRE(gamma_draws.size() == 4000);
  const double ks_gamma = statsref::ks_distance(
      gamma_draws, [](double x) { return statsref::gamma_cdf(x, 2.0, 1.0); });
  const double ks_tau = statsref::ks_distance(
      tau_draws, [](double x) { return statsref::norm_cdf(x, 0.0, 10.0); });
  CHECK(ks_gamma < 0.08);
  CHECK(ks_tau < 0.08);
}

TEST_CASE("prior-only posterior recovers an estimated initial state") {
  FitSpec spec = study_spec();
  spec.priors.init_state = DirichletPrior{{8.0, 1.0, 0.5, 0.5}};
  const auto names = report_param_names(spec);
  CHECK(std::find(names.begin(), names.end(), "init_s") != names.end());
  CHECK(std::find(names.begin(), names.end(), "init_r") != names.end());

  McmcConfig config;
  config.chains = 2;
  config.iterations = 40000;
  config.burn_in = 15000;
  config.thin = 10;
  config.seed = 19;
  const auto chains = posterior_sample(SurveillanceDataset{}, spec, config);
  // dirichlet marginals are beta with the complementary concentration mass
  const double ks_s = statsref::ks_distance(
      pooled_param(chains, "init_s"),
      [](double x) { return statsref::beta_cdf(x, 8.0, 2.0); });
  const double ks_i = statsref::ks_distance(
      pooled_param(chains, "init_i"),
      [](double x) { return statsref::beta_cdf(x, 1.0, 9.0); });
  CHECK(ks_s < 0.08);
  CHECK(ks_i < 0.08);
  for (const auto& row : chains[0].draws) {
    const auto theta = theta_from_row(spec, row);
    double total = 0.0;
    for (double p : theta.init_state) total += p;
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("prior-only posterior recovers estimated test performance") {
  FitSpec spec = study_spec();
  spec.performance.sensitivity[1] = PerformanceEntry{1.0, BetaPrior{7.0, 6.0}};
  spec.performance.specificity[1] = PerformanceEntry{1.0, BetaPrior{41.0, 1.0}};
  McmcConfig config;
  config.chains = 2;
  config.iterations = 40000;
  config.burn_in = 15000;
  config.thin = 10;
  config.seed = 23;
  const auto chains = posterior_sample(SurveillanceDataset{}, spec, config);
  const double ks_sens = statsref::ks_distance(
      pooled_param(chains, "sens_serology"),
      [](double x) { return statsref::beta_cdf(x, 7.0, 6.0); });
  const double ks_spec = statsref::ks_distance(
      pooled_param(chains, "spec_serology"),
      [](double x) { return statsref::beta_cdf(x, 41.0, 1.0); });
  CHECK(ks_sens < 0.08);
  CHECK(ks_spec < 0.08);
}

TEST_CASE("mcmc posterior matches grid quadrature on a reduced problem") {
  // two-parameter SIR posterior (tau0 and init pinned) integrated on a fine
  // log-space grid, as an independent route to the posterior mean
  const SirParams truth{0.357, 0.143};
  const auto traj = integrate(ModelParams(truth), make_state(ModelKind::kSir, {0.999, 0.001, 0.0}),
                              0.0, 90.0);
  const auto map = sir_map(SirAmbiguity::kInfectious);
  Rng rng(4040);
  SamplingSchedule schedule;
  schedule.day = {10, 25, 40, 55, 70, 85};
  schedule.count = {25, 25, 25, 25, 25, 25};
  const auto data =
      simulate_dataset(traj, schedule, map, TestPerformance::perfect(2), Streams::kPaired, rng);

  FitSpec spec;
  spec.model = ModelKind::kSir;
  spec.map = map;
  spec.performance = PerformanceSpec::fixed(TestPerformance::perfect(2));
  spec.priors.r0 = gamma_hyperparams_from_moments(2.5, 100.0);
  spec.priors.gamma = gamma_hyperparams_from_moments(2.0, 2.0);
  spec.priors.tau0.reset();
  spec.init_state = {0.999, 0.001, 0.0};

  // quadrature over z = (log r0, log gamma)
  const int n_grid = 160;
  const double lo_r0 = std::log(1.2), hi_r0 = std::log(5.0);
  const double lo_g = std::log(0.04), hi_g = std::log(0.6);
  double mass = 0.0, mean_r0 = 0.0, mean_gamma = 0.0;
  double max_lp = -std::numeric_limits<double>::infinity();
  std::vector<double> lps(static_cast<std::size_t>(n_grid * n_grid));
  std::vector<std::pair<double, double>> points(lps.size());
  for (int a = 0; a < n_grid; ++a) {
    for (int b = 0; b < n_grid; ++b) {
      const double z0 = lo_r0 + (hi_r0 - lo_r0) * (a + 0.5) / n_grid;
      const double z1 = lo_g + (hi_g - lo_g) * (b + 0.5) / n_grid;
      ThetaVector theta;
      theta.model = ModelKind::kSir;
      theta.gamma = std::exp(z1);
      theta.beta = std::exp(z0) * theta.gamma;
      theta.tau0 = 0.0;
      theta.init_state = {0.999, 0.001, 0.0};
      theta.performance = TestPerformance::perfect(2);
      const double lp = log_likelihood(theta, data, map) +
                        spec.priors.r0.log_pdf(std::exp(z0)) + z0 +
                        spec.priors.gamma.log_pdf(theta.gamma) + z1;
      const auto idx = static_cast<std::size_t>(a * n_grid + b);
      lps[idx] = lp;
      points[idx] = {std::exp(z0), theta.gamma};
      max_lp = std::max(max_lp, lp);
    }
  }
  for (std::size_t k = 0; k < lps.size(); ++k) {
    const double w = std::exp(lps[k] - max_lp);
    mass += w;
    mean_r0 += w * points[k].first;
    mean_gamma += w * points[k].second;
  }
  mean_r0 /= mass;
  mean_gamma /= mass;

  McmcConfig config;
  config.chains = 2;
  config.iterations = 40000;
  config.burn_in = 15000;
  config.thin = 10;
  config.seed = 91;
  const auto chains = posterior_sample(data, spec, config);
  const auto r0_draws = pooled_param(chains, "r0");
  const auto gamma_draws = pooled_param(chains, "gamma");
  const double mcmc_r0 =
      std::accumulate(r0_draws.begin(), r0_draws.end(), 0.0) / r0_draws.size();
  const double mcmc_gamma =
      std::accumulate(gamma_draws.begin(), gamma_draws.end(), 0.0) / gamma_draws.size();
  CHECK(mcmc_r0 == doctest::Approx(mean_r0).epsilon(0.03));
  CHECK(mcmc_gamma == doctest::Approx(mean_gamma).epsilon(0.03));
}

TEST_CASE("mle surfaces non-convergence with the best point so far") {
  const auto data = weekly_paired_dataset(500, 77);
  MleOptions options;
  options.starts = 3;
  options.max_iters = 1;  // cannot shrink the simplex spread in one iteration
  options.seed = 5;
  try {
    mle_fit(data, study_spec(), options);
    FAIL("expected MleNonConvergenceError");
  } catch (const MleNonConvergenceError& e) {
    CHECK(e.best.converged_starts == 0);
    CHECK(e.best.report_row.size() == e.best.param_names.size());
    CHECK(std::isfinite(e.best.log_likelihood));
  }
}

TEST_CASE("convergence diagnostics distinguish mixed from split chains") {
  const auto make_chain = [](int id, double offset) {
    PosteriorChain chain;
    chain.chain_id = id;
    chain.param_names = {"x"};
    Rng rng(static_cast<std::uint64_t>(id) + 1);
    for (int k = 0; k < 500; ++k) {
      chain.draws.push_back({offset + rng.normal()});
      chain.iteration.push_back(k + 1);
      chain.log_posterior.push_back(0.0);
    }
    return chain;
  };
  const std::vector<PosteriorChain> good = {make_chain(0, 0.0), make_chain(1, 0.0)};
  const auto good_report = convergence_diagnostics(good);
  CHECK(good_report.max_rhat < 1.05);
  CHECK(good_report.ok);
  CHECK(good_report.ess[0] > 100.0);

  const std::vector<PosteriorChain> bad = {make_chain(0, 0.0), make_chain(1, 5.0)};
  const auto bad_report = convergence_diagnostics(bad);
  CHECK(bad_report.max_rhat > 1.05);
  CHECK_FALSE(bad_report.ok);
}

TEST_CASE("posterior csv round trip") {
  const auto data = weekly_paired_dataset(50, 3);
  McmcConfig config;
  config.chains = 2;
  config.iterations = 1000;
  config.burn_in = 500;
  config.thin = 10;
  config.seed = 5;
  const auto chains = posterior_sample(data, study_spec(), config);
  const auto csv = posterior_csv(chains);
  const auto parsed = posterior_from_csv(csv);
  REQUIRE(parsed.size() == chains.size());
  CHECK(parsed[0].param_names == chains[0].param_names);
  for (std::size_t c = 0; c < chains.size(); ++c) {
    REQUIRE(parsed[c].draws.size() == chains[c].draws.size());
    for (std::size_t k = 0; k < chains[c].draws.size(); ++k) {
      CHECK(parsed[c].draws[k] == chains[c].draws[k]);  // 17 digits round-trip
    }
  }
}

TEST_CASE("mcmc config validation") {
  McmcConfig config;
  config.chains = 1;
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.chains = 2;
  config.iterations = 100;
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.iterations = 2000;
  config.burn_in = 2000;
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.burn_in = -1;
  config.thin = 0;
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
}
