#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "pairedepi/errors.hpp"

using pairedepi::cli::CommonArgs;

namespace {

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* config = cmd->add_option("--config", args.config_path, "JSON config file");
  if (needs_config) config->required();
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", args.threads, "worker threads");
  cmd->add_flag("--quiet", args.quiet, "suppress progress lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compartment-model inference for paired diagnostic surveillance data"};
  app.set_version_flag("--version", pairedepi::cli::kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  int (*run)(const CommonArgs&) = nullptr;

  auto* trajectory = app.add_subcommand("trajectory", "integrate an epidemic trajectory");
  add_common(trajectory, args, true);
  trajectory->callback([&] { run = pairedepi::cli::cmd_trajectory; });

  auto* simulate = app.add_subcommand("simulate", "simulate a surveillance dataset");
  add_common(simulate, args, true);
  simulate->callback([&] { run = pairedepi::cli::cmd_simulate; });

  auto* fit = app.add_subcommand("fit", "fit a model to a dataset");
  add_common(fit, args, true);
  fit->add_option("--data", args.data_path, "dataset CSV")->required();
  fit->add_option("--streams", args.streams_override,
                  "mask the dataset to one stream: paired, pcr, serology");
  fit->callback([&] { run = pairedepi::cli::cmd_fit; });

  auto* score = app.add_subcommand("score", "log-score a fitted model against data");
  add_common(score, args, false);
  score->add_option("--fit", args.fit_dir, "fit output directory")->required();
  score->add_option("--data", args.data_path, "dataset CSV")->required();
  score->callback([&] { run = pairedepi::cli::cmd_score; });

  auto* ppc = app.add_subcommand("ppc", "posterior predictive check of a fitted model");
  add_common(ppc, args, false);
  ppc->add_option("--fit", args.fit_dir, "fit output directory")->required();
  ppc->add_option("--data", args.data_path, "dataset CSV")->required();
  ppc->callback([&] { run = pairedepi::cli::cmd_ppc; });

  auto* study = app.add_subcommand("study", "replicated sampling-design simulation study");
  add_common(study, args, true);
  study->callback([&] { run = pairedepi::cli::cmd_study; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pairedepi::cli::kExitValidation;
  }

  try {
    return run(args);
  } catch (const pairedepi::InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pairedepi::cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pairedepi::cli::kExitRuntimeFailure;
  }
}
