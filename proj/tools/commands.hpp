#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace pairedepi::cli {

inline constexpr const char* kVersion = "0.1.0";

// exit codes: 0 success, 2 validation error, 3 convergence-warning success,
// 4 runtime failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitConvergenceWarning = 3;
inline constexpr int kExitRuntimeFailure = 4;

struct CommonArgs {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::filesystem::path data_path;
  std::filesystem::path fit_dir;
  std::optional<std::uint64_t> seed;
  std::string streams_override;
  int threads = 1;
  bool quiet = false;
};

int cmd_trajectory(const CommonArgs& args);
int cmd_simulate(const CommonArgs& args);
int cmd_fit(const CommonArgs& args);
int cmd_score(const CommonArgs& args);
int cmd_ppc(const CommonArgs& args);
int cmd_study(const CommonArgs& args);

}  // namespace pairedepi::cli
