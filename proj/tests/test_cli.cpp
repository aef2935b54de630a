// End-to-end checks of the command-line tool: file outputs, exit codes, and
// byte-level replay determinism. Run as `test_cli --cli=<path-to-binary>`.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairedepi/csvio.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_work;

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " 2> " + (g_work / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  pairedepi::write_file(path, text);
}

std::string slurp(const fs::path& path) { return pairedepi::read_file(path); }

// manifest equality modulo timestamps
bool manifests_match(const fs::path& a, const fs::path& b) {
  auto ja = nlohmann::json::parse(slurp(a));
  auto jb = nlohmann::json::parse(slurp(b));
  for (auto* j : {&ja, &jb}) {
    j->erase("started_at");
    j->erase("finished_at");
  }
  return ja == jb;
}

const char* kFitConfig = R"({
  "model": "sibr",
  "map": "sibr",
  "method": "bayes",
  "priors": {
    "r0": {"mean": 2.5, "variance": 100},
    "gamma": {"mean": 2, "variance": 2},
    "eta": {"mean": 2, "variance": 2},
    "tau0": {"mean": 0, "variance": 100},
    "init": {"fixed": [0.999, 0.001, 0, 0]}
  },
  "mcmc": {"chains": 2, "iterations": 2000, "burn_in": 1000, "thin": 5, "seed": 7}
})";

}  // namespace

TEST_CASE("trajectory command writes a deterministic csv") {
  const fs::path dir = g_work / "traj";
  write(dir / "config.json",
        R"({"model":"sibr","params":{"beta":0.357,"gamma":0.143,"eta":0.429},"t_end":120})");
  REQUIRE(run_cli("trajectory --config " + (dir / "config.json").string() + " --out " +
                  (dir / "a").string() + " --quiet") == 0);
  const auto lines = pairedepi::split_lines(slurp(dir / "a" / "trajectory.csv"));
  CHECK(lines[0] == "time,s,i,b,r");
  CHECK(lines.size() == 1202);

  REQUIRE(run_cli("trajectory --config " + (dir / "config.json").string() + " --out " +
                  (dir / "b").string() + " --quiet") == 0);
  CHECK(slurp(dir / "a" / "trajectory.csv") == slurp(dir / "b" / "trajectory.csv"));
  CHECK(manifests_match(dir / "a" / "manifest.json", dir / "b" / "manifest.json"));
}

TEST_CASE("trajectory config errors carry field paths and exit 2") {
  const fs::path dir = g_work / "trajbad";
  write(dir / "config.json", R"({"model":"sibr","params":{"beta":0.357,"gamma":0.143}})");
  CHECK(run_cli("trajectory --config " + (dir / "config.json").string() + " --out " +
                (dir / "out").string() + " --quiet") == 2);
  const std::string err = slurp(g_work / "stderr.txt");
  CHECK(err.find("params.eta") != std::string::npos);
}

TEST_CASE("simulate produces the dataset schema and honors masking") {
  const fs::path dir = g_work / "sim";
  write(dir / "paired.json",
        R"({"design":{"total_samples":100,"cadence":"biweekly","allocation":"equal","streams":"paired"},"seed":5})");
  REQUIRE(run_cli("simulate --config " + (dir / "paired.json").string() + " --out " +
                  (dir / "paired").string() + " --quiet") == 0);
  const auto lines = pairedepi::split_lines(slurp(dir / "paired" / "dataset.csv"));
  REQUIRE(lines.size() == 101);
  CHECK(lines[0] == "id,time,pcr,serology");
  for (std::size_t k = 1; k < lines.size(); ++k) {
    CHECK(lines[k].find("NA") == std::string::npos);
  }

  write(dir / "pcr.json",
        R"({"design":{"total_samples":50,"cadence":"monthly","allocation":"equal","streams":"pcr"},"seed":5})");
  REQUIRE(run_cli("simulate --config " + (dir / "pcr.json").string() + " --out " +
                  (dir / "pcr").string() + " --quiet") == 0);
  const auto pcr_lines = pairedepi::split_lines(slurp(dir / "pcr" / "dataset.csv"));
  REQUIRE(pcr_lines.size() == 51);
  for (std::size_t k = 1; k < pcr_lines.size(); ++k) {
    const auto cells = pairedepi::split_csv_line(pcr_lines[k]);
    CHECK(cells[3] == "NA");
    CHECK(cells[2] != "NA");
  }

  SUBCASE("different seeds change the dataset") {
    REQUIRE(run_cli("simulate --config " + (dir / "paired.json").string() + " --out " +
                    (dir / "other").string() + " --seed 6 --quiet") == 0);
    CHECK(slurp(dir / "other" / "dataset.csv") != slurp(dir / "paired" / "dataset.csv"));
  }
  SUBCASE("the excluded weekly cell is rejected with exit 2") {
    write(dir / "bad.json",
          R"({"design":{"total_samples":10,"cadence":"weekly","allocation":"equal","streams":"paired"}})");
    CHECK(run_cli("simulate --config " + (dir / "bad.json").string() + " --out " +
                  (dir / "bad").string() + " --quiet") == 2);
    const std::string err = slurp(g_work / "stderr.txt");
    CHECK(err.find("13") != std::string::npos);
  }
}

TEST_CASE("fit round-trips simulate output and is replay-identical") {
  const fs::path dir = g_work / "fit";
  write(dir / "sim.json",
        R"({"design":{"total_samples":100,"cadence":"weekly","allocation":"equal","streams":"paired"},"seed":9})");
  REQUIRE(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " +
                  (dir / "data").string() + " --quiet") == 0);
  write(dir / "fit.json", kFitConfig);

  const std::string fit_args = "fit --config " + (dir / "fit.json").string() + " --data " +
                               (dir / "data" / "dataset.csv").string();
  const int code_a = run_cli(fit_args + " --out " + (dir / "a").string() + " --quiet");
  CHECK((code_a == 0 || code_a == 3));
  const int code_b = run_cli(fit_args + " --out " + (dir / "b").string() + " --quiet");
  CHECK(code_a == code_b);
  CHECK(slurp(dir / "a" / "posterior.csv") == slurp(dir / "b" / "posterior.csv"));
  CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));
  CHECK(manifests_match(dir / "a" / "manifest.json", dir / "b" / "manifest.json"));

  const auto header = pairedepi::split_lines(slurp(dir / "a" / "posterior.csv"))[0];
  CHECK(header == "chain,iter,r0,beta,gamma,eta,tau0,log_posterior");

  SUBCASE("stream masking via the flag changes the fit") {
    const int code = run_cli(fit_args + " --streams pcr --out " + (dir / "pcr").string() +
                             " --quiet");
    CHECK((code == 0 || code == 3));
    CHECK(slurp(dir / "pcr" / "posterior.csv") != slurp(dir / "a" / "posterior.csv"));
    const auto manifest = nlohmann::json::parse(slurp(dir / "pcr" / "manifest.json"));
    CHECK(manifest["config"]["streams"] == "pcr");
  }

  SUBCASE("score and ppc consume the fit directory") {
    write(dir / "score.json", R"({"location":"siteA"})");
    REQUIRE(run_cli("score --fit " + (dir / "a").string() + " --data " +
                    (dir / "data" / "dataset.csv").string() + " --config " +
                    (dir / "score.json").string() + " --out " + (dir / "score1").string() +
                    " --quiet") == 0);
    const auto lines = pairedepi::split_lines(slurp(dir / "score1" / "scores.csv"));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "location,model,data_config,score_pcr,score_serology,score_combined");
    const auto cells = pairedepi::split_csv_line(lines[1]);
    CHECK(cells[0] == "siteA");
    CHECK(cells[1] == "sibr");
    const double pcr = pairedepi::parse_double(cells[3], "pcr");
    const double sero = pairedepi::parse_double(cells[4], "serology");
    const double combined = pairedepi::parse_double(cells[5], "combined");
    CHECK(std::abs(combined - (pcr + sero)) < 1e-9);

    REQUIRE(run_cli("score --fit " + (dir / "a").string() + " --data " +
                    (dir / "data" / "dataset.csv").string() + " --config " +
                    (dir / "score.json").string() + " --out " + (dir / "score2").string() +
                    " --quiet") == 0);
    CHECK(slurp(dir / "score1" / "scores.csv") == slurp(dir / "score2" / "scores.csv"));

    REQUIRE(run_cli("ppc --fit " + (dir / "a").string() + " --data " +
                    (dir / "data" / "dataset.csv").string() + " --out " +
                    (dir / "ppc1").string() + " --seed 4 --quiet") == 0);
    REQUIRE(run_cli("ppc --fit " + (dir / "a").string() + " --data " +
                    (dir / "data" / "dataset.csv").string() + " --out " +
                    (dir / "ppc2").string() + " --seed 4 --quiet") == 0);
    CHECK(slurp(dir / "ppc1" / "ppc.csv") == slurp(dir / "ppc2" / "ppc.csv"));
    CHECK(pairedepi::split_lines(slurp(dir / "ppc1" / "ppc.csv"))[0] ==
          "test,bin_start,bin_end,observed_rate,n_obs,q025,q50,q975");
  }
}

TEST_CASE("sir fits score only their determined stream") {
  const fs::path dir = g_work / "sir";
  write(dir / "sim.json",
        R"({"design":{"total_samples":100,"cadence":"biweekly","allocation":"equal","streams":"paired"},"seed":17})");
  REQUIRE(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " +
                  (dir / "data").string() + " --quiet") == 0);
  write(dir / "fit.json", R"({
    "model": "sir", "map": "sir_i", "method": "bayes", "streams": "pcr",
    "priors": {"tau0": {"mean": 0, "variance": 100}, "init": {"fixed": [0.999, 0.001, 0]}},
    "mcmc": {"chains": 2, "iterations": 2000, "burn_in": 1000, "thin": 5, "seed": 3}
  })");
  const int code = run_cli("fit --config " + (dir / "fit.json").string() + " --data " +
                           (dir / "data" / "dataset.csv").string() + " --out " +
                           (dir / "fit").string() + " --quiet");
  REQUIRE((code == 0 || code == 3));

  REQUIRE(run_cli("score --fit " + (dir / "fit").string() + " --data " +
                  (dir / "data" / "dataset.csv").string() + " --out " +
                  (dir / "score").string() + " --quiet") == 0);
  const auto lines = pairedepi::split_lines(slurp(dir / "score" / "scores.csv"));
  const auto cells = pairedepi::split_csv_line(lines[1]);
  CHECK(cells[1] == "sir_i");
  CHECK_FALSE(cells[3].empty());  // pcr scored
  CHECK(cells[4].empty());        // serology cell structurally blank
  CHECK(cells[5].empty());        // combined blank without both streams
}

TEST_CASE("estimated test performance flows through the fit config") {
  const fs::path dir = g_work / "estperf";
  write(dir / "sim.json",
        R"({"design":{"total_samples":100,"cadence":"biweekly","allocation":"equal","streams":"paired"},"seed":29})");
  REQUIRE(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " +
                  (dir / "data").string() + " --quiet") == 0);
  // the "estimate" form picks its Beta priors out of the priors block
  write(dir / "fit.json", R"({
    "model": "sibr", "map": "sibr", "method": "bayes",
    "performance": {"sensitivity": [1.0, "estimate"], "specificity": [1.0, "estimate"]},
    "priors": {
      "tau0": {"mean": 0, "variance": 100},
      "init": {"fixed": [0.999, 0.001, 0, 0]},
      "sensitivity": [null, {"beta": [7, 6]}],
      "specificity": [null, {"beta": [41, 1]}]
    },
    "mcmc": {"chains": 2, "iterations": 2000, "burn_in": 1000, "thin": 5, "seed": 13}
  })");
  const int code = run_cli("fit --config " + (dir / "fit.json").string() + " --data " +
                           (dir / "data" / "dataset.csv").string() + " --out " +
                           (dir / "fit").string() + " --quiet");
  REQUIRE((code == 0 || code == 3));
  const auto header = pairedepi::split_lines(slurp(dir / "fit" / "posterior.csv"))[0];
  CHECK(header == "chain,iter,r0,beta,gamma,eta,tau0,sens_serology,spec_serology,log_posterior");
  const auto summary = nlohmann::json::parse(slurp(dir / "fit" / "summary.json"));
  const double sens_mean = summary["params"]["sens_serology"]["mean"].get<double>();
  CHECK(sens_mean > 0.0);
  CHECK(sens_mean < 1.0);
}

TEST_CASE("mle fit emits an estimate") {
  const fs::path dir = g_work / "mle";
  write(dir / "sim.json",
        R"({"design":{"total_samples":200,"cadence":"weekly","allocation":"equal","streams":"paired"},"seed":23})");
  REQUIRE(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " +
                  (dir / "data").string() + " --quiet") == 0);
  write(dir / "fit.json", R"({
    "model": "sibr", "map": "sibr", "method": "mle",
    "priors": {"tau0": {"mean": 0, "variance": 100}, "init": {"fixed": [0.999, 0.001, 0, 0]}},
    "mle": {"starts": 4, "max_iters": 1200, "seed": 2}
  })");
  const int code = run_cli("fit --config " + (dir / "fit.json").string() + " --data " +
                           (dir / "data" / "dataset.csv").string() + " --out " +
                           (dir / "fit").string() + " --quiet");
  REQUIRE((code == 0 || code == 3));
  const auto estimate = nlohmann::json::parse(slurp(dir / "fit" / "estimate.json"));
  CHECK(estimate["method"] == "mle");
  CHECK(estimate["params"].contains("beta"));
  CHECK(estimate["params"]["gamma"].get<double>() > 0.0);
}

TEST_CASE("study runs thread-invariantly with exit codes") {
  const fs::path dir = g_work / "study";
  write(dir / "study.json", R"({
    "designs": ["n50_monthly_equal_paired", "n50_biweekly_equal_pcr"],
    "replicates": 2,
    "mcmc": {"chains": 2, "iterations": 2000, "burn_in": 1000, "thin": 5},
    "seed": 12
  })");
  REQUIRE(run_cli("study --config " + (dir / "study.json").string() + " --out " +
                  (dir / "t1").string() + " --threads 1 --quiet") == 0);
  REQUIRE(run_cli("study --config " + (dir / "study.json").string() + " --out " +
                  (dir / "t8").string() + " --threads 8 --quiet") == 0);
  CHECK(slurp(dir / "t1" / "replicates.csv") == slurp(dir / "t8" / "replicates.csv"));
  CHECK(slurp(dir / "t1" / "aggregate.csv") == slurp(dir / "t8" / "aggregate.csv"));
  CHECK(slurp(dir / "t1" / "designs.csv") == slurp(dir / "t8" / "designs.csv"));

  SUBCASE("explicitly requesting the excluded design fails validation") {
    write(dir / "bad.json", R"({"designs": ["n10_weekly_equal_paired"], "replicates": 1})");
    CHECK(run_cli("study --config " + (dir / "bad.json").string() + " --out " +
                  (dir / "bad").string() + " --quiet") == 2);
  }
}

int main(int argc, char** argv) {
  doctest::Context context;
  std::vector<char*> passthrough;
  for (int k = 0; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg.rfind("--cli=", 0) == 0) {
      g_cli = arg.substr(6);
    } else {
      passthrough.push_back(argv[k]);
    }
  }
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: test_cli --cli=<path-to-pairedepi-binary>\n");
    return 1;
  }
  g_work = fs::temp_directory_path() / "pairedepi_cli_tests";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  context.applyCommandLine(static_cast<int>(passthrough.size()), passthrough.data());
  return context.run();
}
