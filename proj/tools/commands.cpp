#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "config_view.hpp"
#include "pairedepi/csvio.hpp"
#include "pairedepi/diagnostics.hpp"
#include "pairedepi/inference.hpp"
#include "pairedepi/rng.hpp"
#include "pairedepi/simstudy.hpp"

namespace fs = std::filesystem;

namespace pairedepi::cli {

namespace {

void say(const CommonArgs& args, const std::string& line) {
  if (!args.quiet) std::cerr << line << "\n";
}

void require_out_dir(const CommonArgs& args) {
  if (args.out_dir.empty()) throw InvalidInputError("--out <dir> is required");
  fs::create_directories(args.out_dir);
}

nlohmann::json require_config(const CommonArgs& args) {
  if (args.config_path.empty()) throw InvalidInputError("--config <path> is required");
  return load_config_json(args.config_path);
}

ModelKind parse_model(const ConfigView& view) {
  const std::string name = view.str();
  if (name == "sir") return ModelKind::kSir;
  if (name == "sibr") return ModelKind::kSibr;
  view.fail("model must be 'sir' or 'sibr'");
}

ModelParams parse_params(ModelKind kind, const ConfigView& view) {
  const double beta = view.at("beta").number();
  const double gamma = view.at("gamma").number();
  if (kind == ModelKind::kSir) {
    const SirParams params{beta, gamma};
    params.validate();
    return params;
  }
  const SibrParams params{beta, gamma, view.at("eta").number()};
  params.validate();
  return params;
}

// map: shipped name, JSON file path (relative to the config), or inline object
struct ParsedMap {
  CharacterizationMap map = sibr_map();
  std::string label = "sibr";
};

ParsedMap parse_map(const ConfigView& view, const fs::path& config_dir,
                    ManifestBuilder* manifest) {
  ParsedMap out;
  if (view.raw().is_object()) {
    out.map = CharacterizationMap::from_json(view.raw().dump());
    out.label = "custom";
    return out;
  }
  const std::string name = view.str();
  if (name == "sibr") {
    out.map = sibr_map();
    out.label = "sibr";
  } else if (name == "sir_i") {
    out.map = sir_map(SirAmbiguity::kInfectious);
    out.label = "sir_i";
  } else if (name == "sir_r") {
    out.map = sir_map(SirAmbiguity::kRecovered);
    out.label = "sir_r";
  } else {
    const fs::path path = config_dir / name;
    const std::string bytes = read_file(path);
    if (manifest != nullptr) manifest->add_input(path, bytes);
    out.map = CharacterizationMap::from_json(bytes);
    out.label = "custom";
  }
  return out;
}

GammaPrior parse_gamma_prior(const ConfigView& view) {
  if (view.has("shape")) {
    GammaPrior prior{view.at("shape").number(), view.at("rate").number()};
    prior.validate();
    return prior;
  }
  return gamma_hyperparams_from_moments(view.at("mean").number(),
                                        view.at("variance").number());
}

BetaPrior parse_beta_prior(const ConfigView& view) {
  const auto ab = view.at("beta").number_array();
  if (ab.size() != 2) view.fail("beta prior needs [a, b]");
  BetaPrior prior{ab[0], ab[1]};
  prior.validate();
  return prior;
}

// entries are a fixed number, "estimate" (Beta prior from the priors block,
// uniform when absent), or an inline {"beta": [a, b]}
PerformanceEntry parse_performance_entry(const ConfigView& view,
                                         const std::optional<BetaPrior>& prior_from_priors) {
  if (view.raw().is_number()) return PerformanceEntry{view.number(), std::nullopt};
  if (view.raw().is_string()) {
    if (view.str() != "estimate") view.fail("expected a number, \"estimate\", or a beta prior");
    return PerformanceEntry{1.0, prior_from_priors.value_or(BetaPrior{1.0, 1.0})};
  }
  return PerformanceEntry{1.0, parse_beta_prior(view)};
}

// per-test Beta priors under priors.sensitivity / priors.specificity; null
// entries stand for tests whose performance stays fixed
std::vector<std::optional<BetaPrior>> parse_performance_priors(const ConfigView& priors,
                                                               const char* key, int num_tests) {
  std::vector<std::optional<BetaPrior>> out(static_cast<std::size_t>(num_tests));
  const auto list = priors.maybe(key);
  if (!list) return out;
  if (list->array_size() != static_cast<std::size_t>(num_tests)) {
    list->fail("needs one entry per test");
  }
  for (std::size_t j = 0; j < list->array_size(); ++j) {
    const auto entry = list->item(j);
    if (entry.raw().is_null()) continue;
    out[j] = parse_beta_prior(entry);
  }
  return out;
}

PerformanceSpec parse_performance(const ConfigView& view, const ConfigView& root,
                                  int num_tests) {
  std::vector<std::optional<BetaPrior>> sens_priors(static_cast<std::size_t>(num_tests));
  std::vector<std::optional<BetaPrior>> spec_priors(static_cast<std::size_t>(num_tests));
  if (const auto priors = root.maybe("priors")) {
    sens_priors = parse_performance_priors(*priors, "sensitivity", num_tests);
    spec_priors = parse_performance_priors(*priors, "specificity", num_tests);
  }
  PerformanceSpec spec;
  for (const char* key : {"sensitivity", "specificity"}) {
    const bool is_sens = std::string(key) == "sensitivity";
    const auto list = view.at(key);
    if (list.array_size() != static_cast<std::size_t>(num_tests)) {
      list.fail("needs one entry per test");
    }
    auto& target = is_sens ? spec.sensitivity : spec.specificity;
    const auto& priors = is_sens ? sens_priors : spec_priors;
    for (std::size_t j = 0; j < list.array_size(); ++j) {
      target.push_back(parse_performance_entry(list.item(j), priors[j]));
    }
  }
  return spec;
}

void parse_priors(const ConfigView& view, FitSpec& spec) {
  if (const auto r0 = view.maybe("r0")) spec.priors.r0 = parse_gamma_prior(*r0);
  if (const auto gamma = view.maybe("gamma")) spec.priors.gamma = parse_gamma_prior(*gamma);
  if (const auto eta = view.maybe("eta")) spec.priors.eta = parse_gamma_prior(*eta);
  if (const auto tau0 = view.maybe("tau0")) {
    if (tau0->has("fixed")) {
      spec.priors.tau0.reset();
      spec.priors.fixed_tau0 = tau0->at("fixed").number();
    } else {
      spec.priors.tau0 = NormalPrior{tau0->at("mean").number(), tau0->at("variance").number()};
      spec.priors.tau0->validate();
    }
  }
  if (const auto init = view.maybe("init")) {
    if (init->has("dirichlet")) {
      spec.priors.init_state = DirichletPrior{init->at("dirichlet").number_array()};
      spec.priors.init_state->validate();
    } else {
      spec.init_state = init->at("fixed").number_array();
    }
  }
}

struct ParsedFit {
  FitSpec spec;
  std::string model_label = "sibr";
  std::string streams = "paired";
  std::string method = "bayes";
  McmcConfig mcmc;
  MleOptions mle;
};

ParsedFit parse_fit_config(const nlohmann::json& config, const fs::path& config_dir,
                           ManifestBuilder* manifest) {
  const ConfigView root(config, "");
  ParsedFit fit;
  fit.spec.model = parse_model(root.at("model"));
  const ParsedMap map = parse_map(root.at("map"), config_dir, manifest);
  fit.spec.map = map.map;
  fit.model_label = map.label;
  fit.method = root.str_or("method", "bayes");
  if (fit.method != "bayes" && fit.method != "mle") {
    root.at("method").fail("method must be 'bayes' or 'mle'");
  }
  fit.streams = root.str_or("streams", "paired");
  if (const auto perf = root.maybe("performance")) {
    fit.spec.performance = parse_performance(*perf, root, fit.spec.map.num_tests());
  } else {
    fit.spec.performance =
        PerformanceSpec::fixed(TestPerformance::perfect(fit.spec.map.num_tests()));
  }
  if (const auto priors = root.maybe("priors")) parse_priors(*priors, fit.spec);
  if (const auto mcmc = root.maybe("mcmc")) {
    fit.mcmc.chains = static_cast<int>(mcmc->integer_or("chains", fit.mcmc.chains));
    fit.mcmc.iterations = mcmc->integer_or("iterations", fit.mcmc.iterations);
    fit.mcmc.burn_in = mcmc->integer_or("burn_in", -1);
    fit.mcmc.thin = static_cast<int>(mcmc->integer_or("thin", fit.mcmc.thin));
    if (const auto seed = mcmc->maybe("seed")) fit.mcmc.seed = seed->uinteger();
  }
  if (const auto mle = root.maybe("mle")) {
    fit.mle.starts = static_cast<int>(mle->integer_or("starts", fit.mle.starts));
    fit.mle.max_iters = static_cast<int>(mle->integer_or("max_iters", fit.mle.max_iters));
    if (const auto seed = mle->maybe("seed")) fit.mle.seed = seed->uinteger();
  }
  fit.spec.validate();
  return fit;
}

std::vector<int> streams_to_tests(const std::string& streams, const CharacterizationMap& map) {
  if (streams == "paired") {
    std::vector<int> all(static_cast<std::size_t>(map.num_tests()));
    for (int j = 0; j < map.num_tests(); ++j) all[static_cast<std::size_t>(j)] = j;
    return all;
  }
  if (streams == "pcr") return {0};
  if (streams == "serology") return {1};
  throw InvalidInputError("streams must be 'paired', 'pcr', or 'serology', got '" + streams +
                          "'");
}

// trajectory-generation block shared by the simulate and study configs
struct ParsedTruth {
  ModelParams params = SibrParams{0.357, 0.143, 0.429};
  std::vector<double> init = {0.999, 0.001, 0.0, 0.0};
  double t0 = 0.0;
  TestPerformance performance = TestPerformance::perfect(2);
  ParsedMap map;
};

ParsedTruth parse_truth(const ConfigView& view, const fs::path& config_dir,
                        ManifestBuilder* manifest) {
  ParsedTruth truth;
  const ModelKind kind =
      view.maybe("model") ? parse_model(view.at("model")) : ModelKind::kSibr;
  if (const auto params = view.maybe("params")) {
    truth.params = parse_params(kind, *params);
  } else if (kind == ModelKind::kSir) {
    truth.params = SirParams{0.357, 0.143};
  }
  if (const auto init = view.maybe("init")) {
    truth.init = init->number_array();
  } else if (kind == ModelKind::kSir) {
    truth.init = {0.999, 0.001, 0.0};
  }
  truth.t0 = view.number_or("t0", 0.0);
  if (const auto map = view.maybe("map")) {
    truth.map = parse_map(*map, config_dir, manifest);
  } else if (kind == ModelKind::kSir) {
    truth.map = ParsedMap{sir_map(SirAmbiguity::kInfectious), "sir_i"};
  }
  const int num_tests = truth.map.map.num_tests();
  if (const auto perf = view.maybe("performance")) {
    truth.performance.sensitivity = perf->at("sensitivity").number_array();
    truth.performance.specificity = perf->at("specificity").number_array();
    truth.performance.validate(num_tests);
  } else {
    truth.performance = TestPerformance::perfect(num_tests);
  }
  make_state(kind, truth.init);  // validates dimension and simplex
  if (truth.map.map.num_compartments() != num_compartments(kind)) {
    view.fail("map compartments do not match the model");
  }
  return truth;
}

StudyDesign parse_design(const ConfigView& view) {
  if (view.raw().is_string()) return design_from_id(view.str());
  StudyDesign design;
  design.total_samples = static_cast<int>(view.at("total_samples").integer());
  design.cadence = cadence_from_string(view.at("cadence").str());
  design.allocation = allocation_from_string(view.at("allocation").str());
  design.streams = streams_from_string(view.at("streams").str());
  design.validate();
  return design;
}

std::uint64_t resolve_seed(const CommonArgs& args, const nlohmann::json& scope) {
  if (args.seed.has_value()) return *args.seed;
  if (scope.contains("seed") && scope["seed"].is_number()) {
    return scope["seed"].get<std::uint64_t>();
  }
  return 1;
}

nlohmann::json fit_summary_json(std::span<const PosteriorChain> chains,
                                const ConvergenceReport& report) {
  nlohmann::json summary;
  long n_draws = 0;
  for (const auto& c : chains) n_draws += static_cast<long>(c.draws.size());
  summary["n_draws"] = n_draws;

  nlohmann::json params = nlohmann::json::object();
  const auto add_summary = [&params](const std::string& label, std::vector<double> draws) {
    const double mean =
        std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
    const auto interval = hpdi(std::move(draws), 0.95);
    params[label] = {{"mean", mean}, {"hpdi95", {interval.lo, interval.hi}}};
  };
  for (const auto& name : chains[0].param_names) {
    add_summary(name, pooled_param(chains, name));
  }
  // reporting scale for the recovery rates: average days in the compartment
  const auto add_reciprocal = [&](const std::string& source, const std::string& label) {
    const auto& names = chains[0].param_names;
    if (std::find(names.begin(), names.end(), source) == names.end()) return;
    auto draws = pooled_param(chains, source);
    for (double& x : draws) x = 1.0 / x;
    add_summary(label, std::move(draws));
  };
  add_reciprocal("gamma", "infectious_days");
  add_reciprocal("eta", "broadly_recovered_days");
  summary["params"] = params;

  nlohmann::json rhat = nlohmann::json::object();
  nlohmann::json ess = nlohmann::json::object();
  for (std::size_t p = 0; p < report.param_names.size(); ++p) {
    rhat[report.param_names[p]] = report.rhat[p];
    ess[report.param_names[p]] = report.ess[p];
  }
  summary["rhat"] = rhat;
  summary["ess"] = ess;
  summary["max_rhat"] = report.max_rhat;
  summary["converged"] = report.ok;
  nlohmann::json acceptance = nlohmann::json::array();
  for (const auto& c : chains) acceptance.push_back(c.acceptance_rate);
  summary["acceptance_rates"] = acceptance;
  return summary;
}

// fit output directories are reloaded by score/ppc through the manifest
struct ReloadedFit {
  ParsedFit fit;
  std::vector<PosteriorChain> chains;
  nlohmann::json fit_config;
};

ReloadedFit reload_fit(const fs::path& fit_dir, ManifestBuilder* manifest) {
  const fs::path manifest_path = fit_dir / "manifest.json";
  const std::string manifest_bytes = read_file(manifest_path);
  if (manifest != nullptr) manifest->add_input(manifest_path, manifest_bytes);
  nlohmann::json fit_manifest;
  try {
    fit_manifest = nlohmann::json::parse(manifest_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("fit manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!fit_manifest.contains("config") || fit_manifest.value("command", "") != "fit") {
    throw InvalidInputError(fit_dir.string() + " does not hold a fit run");
  }
  ReloadedFit out;
  out.fit_config = fit_manifest["config"];
  out.fit = parse_fit_config(out.fit_config, fit_dir, nullptr);
  if (out.fit.method != "bayes") {
    throw InvalidInputError("scoring and predictive checks need a bayes fit");
  }
  const fs::path posterior_path = fit_dir / "posterior.csv";
  const std::string posterior_bytes = read_file(posterior_path);
  if (manifest != nullptr) manifest->add_input(posterior_path, posterior_bytes);
  out.chains = posterior_from_csv(posterior_bytes);
  return out;
}

SurveillanceDataset read_dataset(const CommonArgs& args, const CharacterizationMap& map,
                                 ManifestBuilder* manifest) {
  if (args.data_path.empty()) throw InvalidInputError("--data <csv> is required");
  const std::string bytes = read_file(args.data_path);
  if (manifest != nullptr) manifest->add_input(args.data_path, bytes);
  return SurveillanceDataset::from_csv(bytes, map.test_names());
}

std::string perf_suffix(const PerformanceSpec& perf) {
  return perf.num_estimated() > 0 ? "+est_perf" : "";
}

}  // namespace

int cmd_trajectory(const CommonArgs& args) {
  require_out_dir(args);
  nlohmann::json config = require_config(args);
  const ConfigView root(config, "");

  const ModelKind kind = parse_model(root.at("model"));
  const ModelParams params = parse_params(kind, root.at("params"));
  const std::vector<double> init =
      root.has("init") ? root.at("init").number_array()
      : kind == ModelKind::kSir ? std::vector<double>{0.999, 0.001, 0.0}
                                : std::vector<double>{0.999, 0.001, 0.0, 0.0};
  const double t0 = root.number_or("t0", 0.0);
  const double t_end = root.at("t_end").number();
  const double step = root.number_or("step", kDefaultStep);

  const auto trajectory = integrate(params, make_state(kind, init), t0, t_end, step);

  ManifestBuilder manifest("trajectory", 0, args.threads);
  manifest.add_input(args.config_path, read_file(args.config_path));
  write_file(args.out_dir / "trajectory.csv", trajectory.to_csv());
  manifest.add_output("trajectory.csv");
  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);
  say(args, "trajectory: " + std::to_string(trajectory.size()) + " grid points");
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args) {
  require_out_dir(args);
  nlohmann::json config = require_config(args);
  const ConfigView root(config, "");

  const std::uint64_t seed = resolve_seed(args, config);
  config["seed"] = seed;
  ManifestBuilder manifest("simulate", seed, args.threads);
  manifest.add_input(args.config_path, read_file(args.config_path));

  const StudyDesign design = parse_design(root.at("design"));
  const ParsedTruth truth =
      root.has("truth")
          ? parse_truth(root.at("truth"), args.config_path.parent_path(), &manifest)
          : ParsedTruth{};

  const auto horizon = static_cast<double>(kStudyHorizonDays);
  const auto trajectory =
      integrate(truth.params, make_state(model_kind(truth.params), truth.init), truth.t0,
                std::max(horizon, truth.t0 + 1.0));
  Rng rng(seed);
  const SamplingSchedule schedule = draw_schedule(design, rng);
  const SurveillanceDataset data = simulate_dataset(trajectory, schedule, truth.map.map,
                                                    truth.performance, design.streams, rng);

  write_file(args.out_dir / "dataset.csv", data.to_csv(truth.map.map.test_names()));
  manifest.add_output("dataset.csv");

  nlohmann::json truth_json;
  truth_json["design"] = {{"id", design.id()},
                          {"total_samples", design.total_samples},
                          {"cadence", to_string(design.cadence)},
                          {"allocation", to_string(design.allocation)},
                          {"streams", to_string(design.streams)}};
  if (const auto* sibr = std::get_if<SibrParams>(&truth.params)) {
    truth_json["model"] = "sibr";
    truth_json["params"] = {{"beta", sibr->beta}, {"gamma", sibr->gamma}, {"eta", sibr->eta}};
  } else {
    const auto& sir = std::get<SirParams>(truth.params);
    truth_json["model"] = "sir";
    truth_json["params"] = {{"beta", sir.beta}, {"gamma", sir.gamma}};
  }
  truth_json["init"] = truth.init;
  truth_json["t0"] = truth.t0;
  truth_json["performance"] = {{"sensitivity", truth.performance.sensitivity},
                               {"specificity", truth.performance.specificity}};
  truth_json["schedule"] = {{"days", schedule.day}, {"counts", schedule.count}};
  truth_json["seed"] = seed;
  write_file(args.out_dir / "truth.json", truth_json.dump(2) + "\n");
  manifest.add_output("truth.json");

  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);
  say(args, "simulate: " + std::to_string(data.size()) + " records (" + design.id() + ")");
  return kExitOk;
}

int cmd_fit(const CommonArgs& args) {
  require_out_dir(args);
  nlohmann::json config = require_config(args);
  if (!args.streams_override.empty()) config["streams"] = args.streams_override;

  if (!config.contains("mcmc") || !config["mcmc"].is_object()) {
    config["mcmc"] = nlohmann::json::object();
  }
  const std::uint64_t seed = resolve_seed(args, config["mcmc"]);
  config["mcmc"]["seed"] = seed;
  if (!config.contains("mle") || !config["mle"].is_object()) {
    config["mle"] = nlohmann::json::object();
  }
  if (args.seed.has_value() || !config["mle"].contains("seed")) config["mle"]["seed"] = seed;

  ManifestBuilder manifest("fit", seed, args.threads);
  manifest.add_input(args.config_path, read_file(args.config_path));

  ParsedFit fit = parse_fit_config(config, args.config_path.parent_path(), &manifest);
  // manifests carry the map inline so downstream commands can reload it
  config["map"] = nlohmann::json::parse(fit.spec.map.to_json());
  config["model_label"] = fit.model_label;

  SurveillanceDataset data = read_dataset(args, fit.spec.map, &manifest);
  const auto keep = streams_to_tests(fit.streams, fit.spec.map);
  if (static_cast<int>(keep.size()) != fit.spec.map.num_tests()) {
    data = data.masked_to_tests(keep);
  }

  int exit_code = kExitOk;
  if (fit.method == "bayes") {
    fit.mcmc.threads = args.threads;
    const auto chains = posterior_sample(data, fit.spec, fit.mcmc);
    const auto report = convergence_diagnostics(chains);
    write_file(args.out_dir / "posterior.csv", posterior_csv(chains));
    manifest.add_output("posterior.csv");
    nlohmann::json summary = fit_summary_json(chains, report);
    summary["method"] = "bayes";
    summary["streams"] = fit.streams;
    // times and the fitted tau0 share one axis: days since this epoch, with
    // negative values marking pre-sampling outbreak projections
    summary["time_epoch"] = config.value("epoch", "");
    nlohmann::json warnings = nlohmann::json::array();
    if (!report.ok) {
      warnings.push_back("potential scale reduction above 1.05; chains may not have converged");
      exit_code = kExitConvergenceWarning;
    }
    summary["warnings"] = warnings;
    write_file(args.out_dir / "summary.json", summary.dump(2) + "\n");
    manifest.add_output("summary.json");
    say(args, "fit: " + std::to_string(chains.size()) + " chains, max rhat " +
                  fmt_double(report.max_rhat));
  } else {
    nlohmann::json estimate;
    try {
      const MleResult result = mle_fit(data, fit.spec, fit.mle);
      estimate["converged"] = result.converged;
      estimate["log_likelihood"] = result.log_likelihood;
      estimate["params"] = nlohmann::json::object();
      for (std::size_t p = 0; p < result.param_names.size(); ++p) {
        estimate["params"][result.param_names[p]] = result.report_row[p];
      }
      estimate["starts"] = result.starts;
      estimate["converged_starts"] = result.converged_starts;
      estimate["iterations"] = result.total_iterations;
      estimate["boundary_flag"] = result.boundary_flag;
      estimate["warnings"] = result.warnings;
      if (result.boundary_flag) exit_code = kExitConvergenceWarning;
    } catch (const MleNonConvergenceError& e) {
      estimate["converged"] = false;
      estimate["error"] = e.what();
      estimate["log_likelihood"] = e.best.log_likelihood;
      estimate["params"] = nlohmann::json::object();
      for (std::size_t p = 0; p < e.best.param_names.size(); ++p) {
        estimate["params"][e.best.param_names[p]] = e.best.report_row[p];
      }
      exit_code = kExitConvergenceWarning;
    }
    estimate["method"] = "mle";
    estimate["streams"] = fit.streams;
    write_file(args.out_dir / "estimate.json", estimate.dump(2) + "\n");
    manifest.add_output("estimate.json");
    say(args, std::string("fit: mle ") +
                  (estimate["converged"].get<bool>() ? "converged" : "not converged"));
  }

  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);
  return exit_code;
}

int cmd_score(const CommonArgs& args) {
  require_out_dir(args);
  if (args.fit_dir.empty()) throw InvalidInputError("--fit <dir> is required");
  ManifestBuilder manifest("score", 0, args.threads);

  nlohmann::json config = nlohmann::json::object();
  if (!args.config_path.empty()) {
    config = load_config_json(args.config_path);
    manifest.add_input(args.config_path, read_file(args.config_path));
  }
  const ConfigView root(config, "");

  const ReloadedFit fit = reload_fit(args.fit_dir, &manifest);
  const SurveillanceDataset data = read_dataset(args, fit.fit.spec.map, &manifest);

  // a test can be scored only when the map determines its true status from
  // the compartment alone (the single-stream SIR models lack one column)
  std::vector<int> scored;
  for (int j = 0; j < fit.fit.spec.map.num_tests(); ++j) {
    if (fit.fit.spec.map.test_determined(j)) scored.push_back(j);
  }
  if (const auto tests = root.maybe("tests")) {
    if (!(tests->raw().is_string() && tests->str() == "all")) {
      std::vector<int> requested;
      for (std::size_t k = 0; k < tests->array_size(); ++k) {
        requested.push_back(fit.fit.spec.map.test_index(tests->item(k).str()));
      }
      for (int j : requested) {
        if (!fit.fit.spec.map.test_determined(j)) {
          tests->fail("test '" + fit.fit.spec.map.test_names()[static_cast<std::size_t>(j)] +
                      "' is not determined by this map; it cannot be scored");
        }
      }
      scored = requested;
    }
  }
  const int max_draws = static_cast<int>(root.integer_or("max_draws", 0));

  if (fit.chains.size() >= 2) {
    const auto convergence = convergence_diagnostics(fit.chains);
    if (!convergence.ok) {
      say(args, "warning: fit chains have max rhat " + fmt_double(convergence.max_rhat) +
                    "; scores may be unstable");
    }
  }

  ScoreReport report = log_score(fit.chains, fit.fit.spec, data, scored, max_draws);
  report.location = root.str_or("location", "");
  report.model = fit.fit_config.value("model_label", fit.fit.model_label);
  report.data_config = fit.fit.streams + perf_suffix(fit.fit.spec.performance);

  write_file(args.out_dir / "scores.csv", score_reports_csv(std::vector<ScoreReport>{report}));
  manifest.add_output("scores.csv");
  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);
  say(args, "score: combined " + fmt_double(report.combined));
  return kExitOk;
}

int cmd_ppc(const CommonArgs& args) {
  require_out_dir(args);
  if (args.fit_dir.empty()) throw InvalidInputError("--fit <dir> is required");

  nlohmann::json config = nlohmann::json::object();
  if (!args.config_path.empty()) config = load_config_json(args.config_path);
  const ConfigView root(config, "");
  const std::uint64_t seed = resolve_seed(args, config);
  config["seed"] = seed;

  ManifestBuilder manifest("ppc", seed, args.threads);
  if (!args.config_path.empty()) {
    manifest.add_input(args.config_path, read_file(args.config_path));
  }

  const ReloadedFit fit = reload_fit(args.fit_dir, &manifest);
  const SurveillanceDataset data = read_dataset(args, fit.fit.spec.map, &manifest);

  const int n_reps = static_cast<int>(root.integer_or("n_reps", 1000));
  const double bin_width = root.number_or("bin_width", 14.0);

  const PpcSummary summary =
      posterior_predictive(fit.chains, fit.fit.spec, data, n_reps, bin_width, seed);
  write_file(args.out_dir / "ppc.csv", summary.to_csv(fit.fit.spec.map.test_names()));
  manifest.add_output("ppc.csv");

  config["n_reps"] = n_reps;
  config["bin_width"] = bin_width;
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& [test, bin_start] : summary.dropped_bins) {
    dropped.push_back({{"test", test}, {"bin_start", bin_start}});
  }
  config["dropped_bins"] = dropped;
  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);
  say(args, "ppc: " + std::to_string(summary.bins.size()) + " bins, band coverage " +
                fmt_double(summary.band_coverage()));
  return kExitOk;
}

int cmd_study(const CommonArgs& args) {
  require_out_dir(args);
  nlohmann::json config = require_config(args);
  const ConfigView root(config, "");

  std::vector<StudyDesign> designs;
  const auto designs_view = root.at("designs");
  if (designs_view.raw().is_string() && designs_view.str() == "all") {
    designs = enumerate_designs();
  } else if (designs_view.raw().is_array()) {
    for (std::size_t k = 0; k < designs_view.array_size(); ++k) {
      designs.push_back(parse_design(designs_view.item(k)));
    }
  } else {
    designs_view.fail("designs must be \"all\" or an array of designs");
  }
  if (designs.empty()) designs_view.fail("no designs selected");

  StudyOptions options;
  options.n_reps = static_cast<int>(root.integer_or("replicates", 50));
  options.master_seed = resolve_seed(args, config);
  config["seed"] = options.master_seed;
  options.threads = args.threads;
  if (const auto truth = root.maybe("truth")) {
    const ParsedTruth parsed = parse_truth(*truth, args.config_path.parent_path(), nullptr);
    const auto* sibr = std::get_if<SibrParams>(&parsed.params);
    if (sibr == nullptr) truth->fail("the study grid simulates the four-compartment model");
    options.truth.params = *sibr;
    options.truth.init = parsed.init;
    options.truth.t0 = parsed.t0;
    options.truth.performance = parsed.performance;
  }
  if (const auto mcmc = root.maybe("mcmc")) {
    options.mcmc.chains = static_cast<int>(mcmc->integer_or("chains", options.mcmc.chains));
    options.mcmc.iterations = mcmc->integer_or("iterations", options.mcmc.iterations);
    options.mcmc.burn_in = mcmc->integer_or("burn_in", options.mcmc.burn_in);
    options.mcmc.thin = static_cast<int>(mcmc->integer_or("thin", options.mcmc.thin));
  }

  const StudyResult result = run_study(designs, options);

  ManifestBuilder manifest("study", options.master_seed, args.threads);
  manifest.add_input(args.config_path, read_file(args.config_path));
  write_file(args.out_dir / "designs.csv", designs_csv(designs));
  manifest.add_output("designs.csv");
  write_file(args.out_dir / "replicates.csv", replicates_csv(result.replicates));
  manifest.add_output("replicates.csv");
  write_file(args.out_dir / "aggregate.csv", aggregates_csv(result.aggregates));
  manifest.add_output("aggregate.csv");
  manifest.set_config(config);
  manifest.write(args.out_dir, kVersion);

  say(args, "study: " + std::to_string(result.replicates.size()) + " replicates, " +
                std::to_string(result.n_failed) + " failed");
  return result.n_failed == 0 ? kExitOk : kExitConvergenceWarning;
}

}  // namespace pairedepi::cli
